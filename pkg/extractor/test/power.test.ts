import { describe, expect, it } from 'vitest'

import { PowerSampler, syntheticPowerSource } from '../src/power.js'

/** Virtual clock so a "10 second" run completes instantly. */
function virtualTime() {
  let now = 0
  return {
    clock: () => now,
    sleep: async (s: number) => {
      now += s
    },
    advance: (s: number) => {
      now += s
    },
  }
}

describe('power sampler', () => {
  it('collects ~100 samples over a 10 s idle run at 10 Hz', async () => {
    const time = virtualTime()
    const sampler = new PowerSampler(syntheticPowerSource(1), { clock: time.clock })
    await sampler.sampleFor(10, time.sleep)
    expect(sampler.sampleCount).toBeGreaterThanOrEqual(95)
    expect(sampler.sampleCount).toBeLessThanOrEqual(105)
  })

  it('emits phase markers as comment lines the analyzer ignores', () => {
    const time = virtualTime()
    const sampler = new PowerSampler(syntheticPowerSource(2), { clock: time.clock })
    sampler.markPhase('load')
    time.advance(0.35)
    sampler.tick()
    sampler.markPhase('inference')
    time.advance(0.35)
    sampler.tick()
    const csv = sampler.toCsv()
    const lines = csv.trim().split('\n')
    expect(lines[0]).toBe('t_s,power_w')
    expect(lines).toContain('#phase,load')
    expect(lines).toContain('#phase,inference')
  })

  it('keeps timestamps strictly increasing across phases', () => {
    const time = virtualTime()
    const sampler = new PowerSampler(syntheticPowerSource(3), { clock: time.clock })
    for (let i = 0; i < 5; i++) {
      sampler.markPhase(`phase${i}`)
      time.advance(0.57)
      sampler.tick()
    }
    const ts = sampler
      .toCsv()
      .trim()
      .split('\n')
      .filter((line) => !line.startsWith('#') && !line.startsWith('t_s'))
      .map((line) => parseFloat(line.split(',')[0]!))
    expect(ts.length).toBeGreaterThan(20)
    for (let i = 1; i < ts.length; i++) expect(ts[i]!).toBeGreaterThan(ts[i - 1]!)
  })

  it('skips grid points when the source is unreadable', () => {
    const time = virtualTime()
    let calls = 0
    const flaky = () => (calls++ % 2 === 0 ? 100 : null)
    const sampler = new PowerSampler(flaky, { clock: time.clock })
    time.advance(1.0)
    sampler.tick()
    expect(sampler.sampleCount).toBeGreaterThan(0)
    expect(sampler.sampleCount).toBeLessThan(11)
  })
})
