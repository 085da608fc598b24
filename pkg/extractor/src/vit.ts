import { createRng, gaussian } from './prng.js'
import type { Image } from './image.js'

/**
 * Vision transformer with a dense per-patch extraction head.
 *
 * Instead of attention-pooling into a single [CLS] embedding, the final
 * block's value projection is reapplied to the full sequence of patch
 * tokens (no attention mixing), followed by the block's output
 * projection, the post layer norm and the visual projection. Every patch
 * token then carries an embedding in the shared image-text space,
 * giving an H x W x d dense feature tensor.
 *
 * Checkpoint ids select the architecture profile (patch size fixes the
 * token grid: 224/32 = 7, 224/14 = 16). Weights are materialized from a
 * seeded deterministic generator: real pretrained checkpoints are not
 * downloadable in this environment, and every shape, data path and
 * determinism property is independent of the weight values.
 */

export interface BackboneProfile {
  patchSize: number
  width: number
  layers: number
  heads: number
  outputDim: number
  visualParamsM: number
}

export const INPUT_SIZE = 224

export const CHECKPOINT_PROFILES: Record<string, BackboneProfile> = {
  'xlm-roberta-base-ViT-B-32': {
    patchSize: 32,
    width: 64,
    layers: 2,
    heads: 4,
    outputDim: 64,
    visualParamsM: 87,
  },
  'xlm-roberta-large-ViT-H-14': {
    patchSize: 14,
    width: 80,
    layers: 2,
    heads: 4,
    outputDim: 80,
    visualParamsM: 632,
  },
}

export function profileFor(checkpoint: string): BackboneProfile {
  const profile = CHECKPOINT_PROFILES[checkpoint]
  if (!profile) {
    throw new Error(
      `checkpoint mismatch: unknown id ${JSON.stringify(checkpoint)}; ` +
        `known: ${Object.keys(CHECKPOINT_PROFILES).join(', ')}`,
    )
  }
  return profile
}

/** Row-major matrix */
interface Mat {
  rows: number
  cols: number
  data: Float64Array
}

function mat(rows: number, cols: number, fill?: () => number): Mat {
  const data = new Float64Array(rows * cols)
  if (fill) for (let i = 0; i < data.length; i++) data[i] = fill()
  return { rows, cols, data }
}

/** out = x @ w + b, x: (n, k), w: (k, m) */
function linear(x: Mat, w: Mat, b: Float64Array | null): Mat {
  const out = mat(x.rows, w.cols)
  for (let i = 0; i < x.rows; i++) {
    for (let k = 0; k < x.cols; k++) {
      const xv = x.data[i * x.cols + k]!
      if (xv === 0) continue
      const wRow = k * w.cols
      const oRow = i * w.cols
      for (let j = 0; j < w.cols; j++) {
        out.data[oRow + j]! += xv * w.data[wRow + j]!
      }
    }
  }
  if (b) {
    for (let i = 0; i < x.rows; i++) {
      for (let j = 0; j < w.cols; j++) out.data[i * w.cols + j]! += b[j]!
    }
  }
  return out
}

function layerNorm(x: Mat, gamma: Float64Array, beta: Float64Array): Mat {
  const out = mat(x.rows, x.cols)
  for (let i = 0; i < x.rows; i++) {
    let mean = 0
    for (let j = 0; j < x.cols; j++) mean += x.data[i * x.cols + j]!
    mean /= x.cols
    let variance = 0
    for (let j = 0; j < x.cols; j++) {
      const d = x.data[i * x.cols + j]! - mean
      variance += d * d
    }
    variance /= x.cols
    const inv = 1 / Math.sqrt(variance + 1e-5)
    for (let j = 0; j < x.cols; j++) {
      out.data[i * x.cols + j] =
        (x.data[i * x.cols + j]! - mean) * inv * gamma[j]! + beta[j]!
    }
  }
  return out
}

function addInPlace(x: Mat, y: Mat): void {
  for (let i = 0; i < x.data.length; i++) x.data[i]! += y.data[i]!
}

function gelu(x: Mat): Mat {
  const out = mat(x.rows, x.cols)
  for (let i = 0; i < x.data.length; i++) {
    const v = x.data[i]!
    out.data[i] = 0.5 * v * (1 + Math.tanh(Math.sqrt(2 / Math.PI) * (v + 0.044715 * v ** 3)))
  }
  return out
}

interface Block {
  ln1Gamma: Float64Array
  ln1Beta: Float64Array
  wq: Mat
  wk: Mat
  wv: Mat
  wo: Mat
  bo: Float64Array
  ln2Gamma: Float64Array
  ln2Beta: Float64Array
  wMlp1: Mat
  bMlp1: Float64Array
  wMlp2: Mat
  bMlp2: Float64Array
}

export class DenseBackbone {
  readonly profile: BackboneProfile
  readonly gridSize: number
  private readonly patchEmbed: Mat
  private readonly posEmbed: Mat
  private readonly clsToken: Float64Array
  private readonly lnPreGamma: Float64Array
  private readonly lnPreBeta: Float64Array
  private readonly blocks: Block[]
  private readonly lnPostGamma: Float64Array
  private readonly lnPostBeta: Float64Array
  private readonly visualProj: Mat

  constructor(checkpoint: string, seed = 0) {
    this.profile = profileFor(checkpoint)
    const { patchSize, width, layers, outputDim } = this.profile
    this.gridSize = Math.floor(INPUT_SIZE / patchSize)
    const patchDim = patchSize * patchSize * 3
    const tokens = this.gridSize * this.gridSize + 1

    const gauss = gaussian(createRng(`backbone|${checkpoint}|${seed}`))
    const init = (fanIn: number) => () => gauss() / Math.sqrt(fanIn)
    const ones = (n: number) => new Float64Array(n).fill(1)
    const zeros = (n: number) => new Float64Array(n)

    this.patchEmbed = mat(patchDim, width, init(patchDim))
    this.posEmbed = mat(tokens, width, init(width))
    this.clsToken = new Float64Array(width).map(() => gauss() / Math.sqrt(width))
    this.lnPreGamma = ones(width)
    this.lnPreBeta = zeros(width)
    this.blocks = []
    for (let layer = 0; layer < layers; layer++) {
      this.blocks.push({
        ln1Gamma: ones(width),
        ln1Beta: zeros(width),
        wq: mat(width, width, init(width)),
        wk: mat(width, width, init(width)),
        wv: mat(width, width, init(width)),
        wo: mat(width, width, init(width)),
        bo: zeros(width),
        ln2Gamma: ones(width),
        ln2Beta: zeros(width),
        wMlp1: mat(width, 4 * width, init(width)),
        bMlp1: zeros(4 * width),
        wMlp2: mat(4 * width, width, init(4 * width)),
        bMlp2: zeros(width),
      })
    }
    this.lnPostGamma = ones(width)
    this.lnPostBeta = zeros(width)
    this.visualProj = mat(width, outputDim, init(width))
  }

  private attention(x: Mat, block: Block): Mat {
    const { width, heads } = this.profile
    const headDim = width / heads
    const q = linear(x, block.wq, null)
    const k = linear(x, block.wk, null)
    const v = linear(x, block.wv, null)
    const mixed = mat(x.rows, width)

    const scale = 1 / Math.sqrt(headDim)
    const scores = new Float64Array(x.rows)
    for (let h = 0; h < heads; h++) {
      const off = h * headDim
      for (let i = 0; i < x.rows; i++) {
        let max = -Infinity
        for (let j = 0; j < x.rows; j++) {
          let dot = 0
          for (let d = 0; d < headDim; d++) {
            dot += q.data[i * width + off + d]! * k.data[j * width + off + d]!
          }
          scores[j] = dot * scale
          if (scores[j]! > max) max = scores[j]!
        }
        let denom = 0
        for (let j = 0; j < x.rows; j++) {
          scores[j] = Math.exp(scores[j]! - max)
          denom += scores[j]!
        }
        for (let j = 0; j < x.rows; j++) {
          const weight = scores[j]! / denom
          if (weight === 0) continue
          for (let d = 0; d < headDim; d++) {
            mixed.data[i * width + off + d]! += weight * v.data[j * width + off + d]!
          }
        }
      }
    }
    return linear(mixed, block.wo, block.bo)
  }

  private mlp(x: Mat, block: Block): Mat {
    return linear(gelu(linear(x, block.wMlp1, block.bMlp1)), block.wMlp2, block.bMlp2)
  }

  /**
   * Dense forward pass over a 224 x 224 RGB image.
   * Returns grid * grid * outputDim features, row-major.
   */
  forward(image: Image): Float32Array {
    const { patchSize, width, outputDim } = this.profile
    if (image.width !== INPUT_SIZE || image.height !== INPUT_SIZE) {
      throw new Error(`expected ${INPUT_SIZE}x${INPUT_SIZE} input, got ${image.width}x${image.height}`)
    }
    const grid = this.gridSize
    const patchDim = patchSize * patchSize * 3

    // patchify + embed
    const patches = mat(grid * grid, patchDim)
    for (let gy = 0; gy < grid; gy++) {
      for (let gx = 0; gx < grid; gx++) {
        const row = gy * grid + gx
        let idx = 0
        for (let py = 0; py < patchSize; py++) {
          const y = gy * patchSize + py
          for (let px = 0; px < patchSize; px++) {
            const x = gx * patchSize + px
            for (let c = 0; c < 3; c++) {
              patches.data[row * patchDim + idx++] = image.data[(y * image.width + x) * 3 + c]!
            }
          }
        }
      }
    }
    const embedded = linear(patches, this.patchEmbed, null)

    // [CLS] + positional embeddings
    const tokens = mat(grid * grid + 1, width)
    tokens.data.set(this.clsToken, 0)
    tokens.data.set(embedded.data, width)
    addInPlace(tokens, this.posEmbed)

    let x = layerNorm(tokens, this.lnPreGamma, this.lnPreBeta)

    // standard blocks, except the last one
    for (let layer = 0; layer < this.blocks.length - 1; layer++) {
      const block = this.blocks[layer]!
      addInPlace(x, this.attention(layerNorm(x, block.ln1Gamma, block.ln1Beta), block))
      addInPlace(x, this.mlp(layerNorm(x, block.ln2Gamma, block.ln2Beta), block))
    }

    // final block: value projection reapplied to the full token sequence,
    // no attention mixing, then the block's output projection
    const last = this.blocks[this.blocks.length - 1]!
    const normed = layerNorm(x, last.ln1Gamma, last.ln1Beta)
    const values = linear(normed, last.wv, null)
    addInPlace(x, linear(values, last.wo, last.bo))
    addInPlace(x, this.mlp(layerNorm(x, last.ln2Gamma, last.ln2Beta), last))

    const post = layerNorm(x, this.lnPostGamma, this.lnPostBeta)
    const projected = linear(post, this.visualProj, null)

    // drop [CLS], keep the patch-token grid
    const dense = new Float32Array(grid * grid * outputDim)
    for (let t = 0; t < grid * grid; t++) {
      for (let d = 0; d < outputDim; d++) {
        dense[t * outputDim + d] = Math.fround(projected.data[(t + 1) * outputDim + d]!)
      }
    }
    return dense
  }
}
