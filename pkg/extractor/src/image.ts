import fs from 'node:fs'
import path from 'node:path'

import { createRng } from './prng.js'

/** RGB image with channel-last float pixels in [0, 1]. */
export interface Image {
  width: number
  height: number
  data: Float64Array // height * width * 3
}

/** Decode a binary P6 PPM file (the only on-disk format the sandbox needs). */
export function decodePpm(raw: Buffer, name = 'image'): Image {
  // header: "P6" <width> <height> <maxval> separated by whitespace/comments
  let pos = 0
  const token = (): string => {
    while (pos < raw.length) {
      const ch = raw[pos]!
      if (ch === 0x23) {
        // '#' comment: skip to end of line
        while (pos < raw.length && raw[pos] !== 0x0a) pos++
      } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
        pos++
      } else {
        break
      }
    }
    const start = pos
    while (pos < raw.length && !isWhitespace(raw[pos]!)) pos++
    if (start === pos) throw new Error(`${name}: truncated PPM header`)
    return raw.subarray(start, pos).toString('ascii')
  }

  if (token() !== 'P6') throw new Error(`${name}: decode failure (not a P6 PPM)`)
  const width = Number(token())
  const height = Number(token())
  const maxval = Number(token())
  if (!(width > 0 && height > 0 && maxval > 0 && maxval < 65536)) {
    throw new Error(`${name}: decode failure (bad PPM dimensions)`)
  }
  pos++ // single whitespace byte after maxval
  const bytesPerSample = maxval < 256 ? 1 : 2
  const expected = width * height * 3 * bytesPerSample
  if (raw.length - pos < expected) throw new Error(`${name}: decode failure (truncated pixels)`)

  const data = new Float64Array(width * height * 3)
  for (let i = 0; i < width * height * 3; i++) {
    const value =
      bytesPerSample === 1 ? raw[pos + i]! : raw.readUInt16BE(pos + 2 * i)
    data[i] = value / maxval
  }
  return { width, height, data }
}

function isWhitespace(ch: number): boolean {
  return ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d
}

/** Bilinear resize with half-pixel centers (matches the analyzer's convention). */
export function resizeBilinear(img: Image, targetW: number, targetH: number): Image {
  const out = new Float64Array(targetW * targetH * 3)
  for (let i = 0; i < targetH; i++) {
    let y = ((i + 0.5) * img.height) / targetH - 0.5
    y = Math.min(Math.max(y, 0), img.height - 1)
    const y0 = Math.floor(y)
    const y1 = Math.min(y0 + 1, img.height - 1)
    const fy = y - y0
    for (let j = 0; j < targetW; j++) {
      let x = ((j + 0.5) * img.width) / targetW - 0.5
      x = Math.min(Math.max(x, 0), img.width - 1)
      const x0 = Math.floor(x)
      const x1 = Math.min(x0 + 1, img.width - 1)
      const fx = x - x0
      for (let c = 0; c < 3; c++) {
        const p00 = img.data[(y0 * img.width + x0) * 3 + c]!
        const p01 = img.data[(y0 * img.width + x1) * 3 + c]!
        const p10 = img.data[(y1 * img.width + x0) * 3 + c]!
        const p11 = img.data[(y1 * img.width + x1) * 3 + c]!
        out[(i * targetW + j) * 3 + c] =
          p00 * (1 - fy) * (1 - fx) + p01 * (1 - fy) * fx + p10 * fy * (1 - fx) + p11 * fy * fx
      }
    }
  }
  return { width: targetW, height: targetH, data: out }
}

/**
 * Deterministic pseudo-image for an id: smooth directional gradients plus
 * a bright blob, so dense features have spatial structure to latch onto.
 */
export function syntheticImage(id: string, size = 224): Image {
  const rand = createRng(`image|${id}`)
  const cx = (0.2 + 0.6 * rand()) * size
  const cy = (0.2 + 0.6 * rand()) * size
  const radius = (0.08 + 0.12 * rand()) * size
  const phase = rand() * 2 * Math.PI
  const base = [rand() * 0.5, rand() * 0.5, rand() * 0.5]

  const data = new Float64Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const grad = 0.25 * (Math.sin((2 * Math.PI * x) / size + phase) + y / size)
      const dist = Math.hypot(x - cx, y - cy)
      const blob = Math.exp(-(dist * dist) / (2 * radius * radius))
      for (let c = 0; c < 3; c++) {
        const value = base[c]! + grad + blob * (c === 0 ? 0.5 : 0.3)
        data[(y * size + x) * 3 + c] = Math.min(Math.max(value, 0), 1)
      }
    }
  }
  return { width: size, height: size, data }
}

/** Load and decode an image file; only .ppm is supported on disk. */
export function loadImage(filePath: string): Image {
  if (path.extname(filePath).toLowerCase() !== '.ppm') {
    throw new Error(`${filePath}: decode failure (only .ppm inputs are supported)`)
  }
  return decodePpm(fs.readFileSync(filePath), filePath)
}
