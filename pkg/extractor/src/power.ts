import { execFileSync } from 'node:child_process'
import fs from 'node:fs'
import path from 'node:path'

import { createRng } from './prng.js'

/** Returns instantaneous draw in watts, or null when unreadable. */
export type PowerSource = () => number | null

/**
 * Probe the GPU management interface. Returns null when no GPU tooling
 * is available, in which case extraction degrades to no-trace with a
 * warning rather than failing.
 */
export function probeGpuPowerSource(): PowerSource | null {
  try {
    execFileSync('nvidia-smi', ['--query-gpu=power.draw', '--format=csv,noheader,nounits'], {
      stdio: ['ignore', 'pipe', 'ignore'],
      timeout: 2000,
    })
  } catch {
    return null
  }
  return () => {
    try {
      const out = execFileSync(
        'nvidia-smi',
        ['--query-gpu=power.draw', '--format=csv,noheader,nounits'],
        { stdio: ['ignore', 'pipe', 'ignore'], timeout: 2000 },
      )
      const watts = parseFloat(out.toString().trim().split('\n')[0] ?? '')
      return Number.isFinite(watts) && watts >= 0 ? watts : null
    } catch {
      return null
    }
  }
}

/** Deterministic load-shaped source for tests and dry runs. */
export function syntheticPowerSource(seed = 0, baseWatts = 99): PowerSource {
  const rand = createRng(`power|${seed}`)
  let t = 0
  return () => {
    t += 1
    return baseWatts + 10 * Math.sin(t / 7) + 2 * rand()
  }
}

interface TraceEvent {
  kind: 'sample' | 'phase'
  t: number
  value: string
}

/**
 * 10 Hz power sampler with phase markers.
 *
 * Node is single-threaded, so during synchronous inference the sampler
 * is driven cooperatively: the extraction loop calls `tick()` between
 * work units and the sampler emits one sample per elapsed interval on a
 * fixed monotone time grid. `sampleFor()` covers idle/async runs.
 */
export class PowerSampler {
  readonly intervalS: number
  private readonly source: PowerSource
  private readonly clock: () => number
  private readonly events: TraceEvent[] = []
  private startT: number | null = null
  private nextSampleT = 0

  constructor(
    source: PowerSource,
    options: { intervalS?: number; clock?: () => number } = {},
  ) {
    this.source = source
    this.intervalS = options.intervalS ?? 0.1
    this.clock = options.clock ?? (() => performance.now() / 1000)
  }

  private now(): number {
    const t = this.clock()
    if (this.startT === null) {
      this.startT = t
      this.nextSampleT = 0
    }
    return t - this.startT
  }

  markPhase(name: string): void {
    this.events.push({ kind: 'phase', t: this.now(), value: name })
  }

  /** Emit one sample per interval boundary passed since the last call. */
  tick(): number {
    const elapsed = this.now()
    let emitted = 0
    while (this.nextSampleT <= elapsed) {
      const watts = this.source()
      if (watts !== null) {
        this.events.push({ kind: 'sample', t: this.nextSampleT, value: watts.toFixed(3) })
        emitted++
      }
      this.nextSampleT += this.intervalS
    }
    return emitted
  }

  /** Idle sampling loop for a fixed duration. */
  async sampleFor(
    durationS: number,
    sleep: (s: number) => Promise<void> = (s) => new Promise((r) => setTimeout(r, 1000 * s)),
  ): Promise<void> {
    const start = this.now()
    while (this.now() - start < durationS) {
      this.tick()
      await sleep(this.intervalS / 2)
    }
    this.tick()
  }

  get sampleCount(): number {
    return this.events.filter((e) => e.kind === 'sample').length
  }

  /** CSV per the analyzer contract: `t_s,power_w` rows, `#phase,` markers. */
  toCsv(): string {
    const lines = ['t_s,power_w']
    for (const event of this.events) {
      if (event.kind === 'phase') {
        lines.push(`#phase,${event.value}`)
      } else {
        lines.push(`${event.t.toFixed(4)},${event.value}`)
      }
    }
    return lines.join('\n') + '\n'
  }

  writeCsv(filePath: string): void {
    fs.mkdirSync(path.dirname(filePath), { recursive: true })
    fs.writeFileSync(filePath, this.toCsv())
  }
}
