import crypto from 'node:crypto'

/**
 * Create a deterministic RNG (xorshift128) from an arbitrary seed string.
 *
 * Every stochastic choice in the extractor (stand-in weights, image
 * subset, synthetic pixels) flows through this so runs are reproducible
 * across machines from the seed alone.
 */
export function createRng(seed: string): () => number {
  const hash = crypto.createHash('sha256').update(seed, 'utf8').digest()
  let s0 = hash.readUInt32BE(0) >>> 0
  let s1 = hash.readUInt32BE(4) >>> 0
  let s2 = hash.readUInt32BE(8) >>> 0
  let s3 = hash.readUInt32BE(12) >>> 0
  if ((s0 | s1 | s2 | s3) === 0) s0 = 0x9e3779b9

  return () => {
    // xorshift128 (Marsaglia)
    const t = (s0 ^ (s0 << 11)) >>> 0
    s0 = s1
    s1 = s2
    s2 = s3
    s3 = (s3 ^ (s3 >>> 19) ^ (t ^ (t >>> 8))) >>> 0
    return s3 / 0x100000000
  }
}

/** Standard normal draw via the Box-Muller transform of two uniforms. */
export function gaussian(rand: () => number): () => number {
  let spare: number | null = null
  return () => {
    if (spare !== null) {
      const value = spare
      spare = null
      return value
    }
    const u1 = 1 - rand() // (0, 1]: keeps the log finite
    const u2 = rand()
    const radius = Math.sqrt(-2 * Math.log(u1))
    spare = radius * Math.sin(2 * Math.PI * u2)
    return radius * Math.cos(2 * Math.PI * u2)
  }
}

/**
 * Sample `count` distinct items without replacement (Fisher-Yates).
 * Returns a shallow copy when count >= items.length.
 */
export function sampleArray<T>(items: readonly T[], count: number, rand: () => number): T[] {
  if (count >= items.length) return items.slice()
  if (count <= 0) return []
  const arr = items.slice()
  for (let i = arr.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1))
    const tmp = arr[i]!
    arr[i] = arr[j]!
    arr[j] = tmp
  }
  return arr.slice(0, count)
}
