import fs from 'node:fs'
import path from 'node:path'

/**
 * Binary tensor file format shared with the analyzer:
 * 8-byte magic "GLNSTNS1", u8 rank (1..3), three little-endian u32 dims
 * (unused trailing dims = 1), then row-major IEEE-754 float32 LE payload.
 *
 * The format is pinned bit-exactly so the analyzer (a different
 * ecosystem) reads these files without any shared library.
 */

const MAGIC = Buffer.from('GLNSTNS1', 'ascii')
const HEADER_SIZE = MAGIC.length + 1 + 12
const MAX_RANK = 3

export function writeTensor(filePath: string, data: Float32Array, dims: number[]): void {
  if (dims.length < 1 || dims.length > MAX_RANK) {
    throw new Error(`tensor rank must be 1..${MAX_RANK}, got ${dims.length}`)
  }
  if (dims.some((d) => !Number.isInteger(d) || d < 1)) {
    throw new Error(`tensor dims must be positive integers, got ${dims}`)
  }
  const count = dims.reduce((a, b) => a * b, 1)
  if (count !== data.length) {
    throw new Error(`dims ${dims} imply ${count} floats, got ${data.length}`)
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i]!)) throw new Error(`non-finite entry at index ${i}`)
  }

  const header = Buffer.alloc(HEADER_SIZE)
  MAGIC.copy(header, 0)
  header.writeUInt8(dims.length, 8)
  const padded = [...dims, 1, 1, 1].slice(0, 3)
  for (let i = 0; i < 3; i++) header.writeUInt32LE(padded[i]!, 9 + 4 * i)

  const payload = Buffer.alloc(4 * data.length)
  for (let i = 0; i < data.length; i++) payload.writeFloatLE(data[i]!, 4 * i)

  fs.mkdirSync(path.dirname(filePath), { recursive: true })
  fs.writeFileSync(filePath, Buffer.concat([header, payload]))
}

export function readTensor(filePath: string): { dims: number[]; data: Float32Array } {
  const raw = fs.readFileSync(filePath)
  if (raw.length < HEADER_SIZE || !raw.subarray(0, 8).equals(MAGIC)) {
    throw new Error(`${filePath}: not a tensor file`)
  }
  const rank = raw.readUInt8(8)
  if (rank < 1 || rank > MAX_RANK) throw new Error(`${filePath}: invalid rank ${rank}`)
  const allDims = [raw.readUInt32LE(9), raw.readUInt32LE(13), raw.readUInt32LE(17)]
  const dims = allDims.slice(0, rank)
  const count = allDims.reduce((a, b) => a * b, 1)
  if (raw.length !== HEADER_SIZE + 4 * count) {
    throw new Error(`${filePath}: payload size mismatch`)
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) data[i] = raw.readFloatLE(HEADER_SIZE + 4 * i)
  return { dims, data }
}
