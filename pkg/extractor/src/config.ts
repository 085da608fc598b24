import fs from 'node:fs'
import { fileURLToPath } from 'node:url'

export const DEFAULT_TRANSLATIONS_PATH = fileURLToPath(
  new URL('../data/translations.json', import.meta.url),
)

export interface ExtractionConfig {
  /** Backbone identifier; selects the architecture profile. */
  checkpoint: string
  /** Corpus root written in the analyzer's layout. */
  outputRoot: string
  /** Directory of .ppm images; mutually exclusive with syntheticImages. */
  imagesDir?: string
  /** Generate this many deterministic pseudo-images instead of reading files. */
  syntheticImages?: number
  subsetSize: number
  subsetSeed: number
  /** Seed for the stand-in backbone weights. */
  backboneSeed: number
  translationsPath: string
  samplePower: boolean
}

export const CONFIG_DEFAULTS = {
  subsetSize: 210,
  subsetSeed: 42,
  backboneSeed: 0,
  translationsPath: DEFAULT_TRANSLATIONS_PATH,
  samplePower: false,
} as const

export function resolveConfig(partial: Partial<ExtractionConfig>): ExtractionConfig {
  const config = { ...CONFIG_DEFAULTS, ...partial } as ExtractionConfig
  if (!config.checkpoint) throw new Error('config requires a checkpoint id')
  if (!config.outputRoot) throw new Error('config requires an output root')
  if (!config.imagesDir && !config.syntheticImages) {
    throw new Error('config requires imagesDir or syntheticImages')
  }
  if (config.imagesDir && config.syntheticImages) {
    throw new Error('imagesDir and syntheticImages are mutually exclusive')
  }
  if (config.subsetSize < 1) throw new Error('subsetSize must be >= 1')
  return config
}

export function loadConfigFile(filePath: string): Partial<ExtractionConfig> {
  return JSON.parse(fs.readFileSync(filePath, 'utf8')) as Partial<ExtractionConfig>
}
