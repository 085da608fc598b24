import { createRng, sampleArray } from './prng.js'

/**
 * Deterministic frozen image subset: a pure function of (seed, sorted
 * full id list). The input is sorted before sampling so directory
 * enumeration order can never leak into the selection, and the result
 * is re-sorted for a stable manifest order.
 */
export function selectSubset(imageIds: readonly string[], size = 210, seed = 42): string[] {
  const sorted = [...imageIds].sort()
  const chosen = sampleArray(sorted, size, createRng(`subset|${seed}`))
  return chosen.sort()
}
