import fs from 'node:fs'
import path from 'node:path'

import type { ExtractionConfig } from './config.js'
import { loadImage, resizeBilinear, syntheticImage } from './image.js'
import { PowerSampler, probeGpuPowerSource, type PowerSource } from './power.js'
import { selectSubset } from './subset.js'
import { writeTensor } from './tensor.js'
import { encodeConcept, loadTranslations } from './text.js'
import { DenseBackbone, INPUT_SIZE } from './vit.js'

export interface ExtractionResult {
  manifestPath: string
  imageIds: string[]
  gridSize: number
  embedDim: number
  featureFiles: number
  textFiles: number
  powerCsvPath: string | null
}

export function featurePath(root: string, backbone: string, imageId: string): string {
  return path.join(root, 'features', backbone, `${imageId}.tns`)
}

export function textPath(root: string, backbone: string, language: string, concept: string): string {
  return path.join(root, 'text', backbone, language, `${concept}.tns`)
}

function listImageIds(config: ExtractionConfig): string[] {
  if (config.imagesDir) {
    const ids = fs
      .readdirSync(config.imagesDir)
      .filter((name) => name.toLowerCase().endsWith('.ppm'))
      .map((name) => name.slice(0, -'.ppm'.length))
    if (ids.length === 0) throw new Error(`no .ppm images under ${config.imagesDir}`)
    return ids
  }
  return Array.from({ length: config.syntheticImages! }, (_, i) => `img${String(i).padStart(5, '0')}`)
}

/**
 * Run the full extraction: dense per-patch features for the frozen image
 * subset, one text embedding per (language, concept), the corpus
 * manifest, and (when a power source is available) a 10 Hz power trace
 * with load/inference phase markers.
 */
export async function runExtraction(
  config: ExtractionConfig,
  options: { powerSource?: PowerSource | null } = {},
): Promise<ExtractionResult> {
  const table = loadTranslations(config.translationsPath)
  const imageIds = selectSubset(listImageIds(config), config.subsetSize, config.subsetSeed)

  let source = options.powerSource
  if (source === undefined && config.samplePower) {
    source = probeGpuPowerSource()
    if (!source) {
      console.warn('power: GPU management interface unavailable, continuing without a trace')
    }
  }
  const sampler = source ? new PowerSampler(source) : null

  sampler?.markPhase('load')
  const backbone = new DenseBackbone(config.checkpoint, config.backboneSeed)
  sampler?.tick()
  const grid = backbone.gridSize
  const dim = backbone.profile.outputDim

  sampler?.markPhase('inference')
  let featureFiles = 0
  for (const imageId of imageIds) {
    let image = config.imagesDir
      ? loadImage(path.join(config.imagesDir, `${imageId}.ppm`))
      : syntheticImage(imageId, INPUT_SIZE)
    if (image.width !== INPUT_SIZE || image.height !== INPUT_SIZE) {
      image = resizeBilinear(image, INPUT_SIZE, INPUT_SIZE)
    }
    const dense = backbone.forward(image)
    writeTensor(featurePath(config.outputRoot, config.checkpoint, imageId), dense, [grid, grid, dim])
    featureFiles++
    sampler?.tick()
  }

  let textFiles = 0
  for (const { code } of table.languages) {
    for (const concept of table.concepts) {
      const vec = encodeConcept(config.checkpoint, table.translations[code]![concept]!)
      writeTensor(textPath(config.outputRoot, config.checkpoint, code, concept), vec, [dim])
      textFiles++
      sampler?.tick()
    }
  }

  const manifest = {
    images: imageIds,
    concepts: table.concepts,
    languages: table.languages,
    reference_language: table.reference_language,
    backbone: {
      name: config.checkpoint,
      visual_params_m: backbone.profile.visualParamsM,
    },
    grid: { h: grid, w: grid },
    embed_dim: dim,
  }
  const manifestPath = path.join(config.outputRoot, 'manifest.json')
  fs.mkdirSync(config.outputRoot, { recursive: true })
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n')

  let powerCsvPath: string | null = null
  if (sampler && sampler.sampleCount > 0) {
    powerCsvPath = path.join(config.outputRoot, 'power', `${config.checkpoint}.csv`)
    sampler.writeCsv(powerCsvPath)
  }

  return {
    manifestPath,
    imageIds,
    gridSize: grid,
    embedDim: dim,
    featureFiles,
    textFiles,
    powerCsvPath,
  }
}
