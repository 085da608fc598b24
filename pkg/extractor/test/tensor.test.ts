import fs from 'node:fs'
import os from 'node:os'
import path from 'node:path'

import { afterAll, describe, expect, it } from 'vitest'

import { readTensor, writeTensor } from '../src/tensor.js'

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'tensor-'))
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }))

describe('tensor format', () => {
  it('writes the fixed header layout', () => {
    const file = path.join(tmp, 'zero.tns')
    writeTensor(file, new Float32Array([0]), [1, 1, 1])
    const raw = fs.readFileSync(file)
    expect(raw.length).toBe(21 + 4)
    expect(raw.subarray(0, 8).toString('ascii')).toBe('GLNSTNS1')
    expect(raw.readUInt8(8)).toBe(3)
    expect([raw.readUInt32LE(9), raw.readUInt32LE(13), raw.readUInt32LE(17)]).toEqual([1, 1, 1])
    expect(raw.subarray(21)).toEqual(Buffer.from([0, 0, 0, 0]))
  })

  it('stores row-major float32 little-endian payload', () => {
    const file = path.join(tmp, 'rowmajor.tns')
    writeTensor(file, new Float32Array([1, 2, 3, 4]), [2, 2])
    const raw = fs.readFileSync(file)
    expect(raw.readUInt8(8)).toBe(2)
    expect([raw.readFloatLE(21), raw.readFloatLE(25), raw.readFloatLE(29), raw.readFloatLE(33)]).toEqual([
      1, 2, 3, 4,
    ])
  })

  it('round-trips bits exactly', () => {
    const data = new Float32Array(7 * 7 * 32)
    for (let i = 0; i < data.length; i++) data[i] = Math.fround(Math.sin(i) * 3.7)
    const file = path.join(tmp, 'roundtrip.tns')
    writeTensor(file, data, [7, 7, 32])
    const back = readTensor(file)
    expect(back.dims).toEqual([7, 7, 32])
    expect(Buffer.from(back.data.buffer)).toEqual(Buffer.from(data.buffer))
  })

  it('rejects non-finite entries and bad dims', () => {
    const file = path.join(tmp, 'bad.tns')
    expect(() => writeTensor(file, new Float32Array([NaN]), [1])).toThrow(/non-finite/)
    expect(() => writeTensor(file, new Float32Array([1]), [])).toThrow(/rank/)
    expect(() => writeTensor(file, new Float32Array([1]), [1, 2])).toThrow(/imply/)
  })

  it('rejects foreign files', () => {
    const file = path.join(tmp, 'foreign.tns')
    fs.writeFileSync(file, Buffer.from('XXXXXXXX and then some bytes'))
    expect(() => readTensor(file)).toThrow(/not a tensor file/)
  })
})
