import { describe, expect, it } from 'vitest'

import { selectSubset } from '../src/subset.js'

const FULL = Array.from({ length: 500 }, (_, i) => `frame-${String(i).padStart(4, '0')}`)

describe('deterministic subset', () => {
  it('is reproducible for the default seed', () => {
    const a = selectSubset(FULL, 210, 42)
    const b = selectSubset(FULL, 210, 42)
    expect(a).toEqual(b)
    expect(a.length).toBe(210)
    expect(new Set(a).size).toBe(210)
  })

  it('depends only on the sorted list, not input order', () => {
    const shuffled = [...FULL].reverse()
    expect(selectSubset(shuffled, 210, 42)).toEqual(selectSubset(FULL, 210, 42))
  })

  it('different seeds give different subsets', () => {
    expect(selectSubset(FULL, 210, 42)).not.toEqual(selectSubset(FULL, 210, 43))
  })

  it('returns everything when the list is smaller than the subset', () => {
    const small = ['b', 'a', 'c']
    expect(selectSubset(small, 210, 42)).toEqual(['a', 'b', 'c'])
  })
})
