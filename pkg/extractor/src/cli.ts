import { parseArgs } from 'node:util'

import { loadConfigFile, resolveConfig, type ExtractionConfig } from './config.js'
import { runExtraction } from './extract.js'
import { syntheticPowerSource } from './power.js'

const USAGE = `usage: extract --checkpoint <id> --out <dir> (--images-dir <dir> | --synthetic <n>)
               [--config <json>] [--subset-size <n>] [--subset-seed <n>] [--seed <n>]
               [--sample-power] [--synthetic-power] [--translations <json>]`

export async function main(argv: string[]): Promise<number> {
  let parsed
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        config: { type: 'string' },
        checkpoint: { type: 'string' },
        out: { type: 'string' },
        'images-dir': { type: 'string' },
        synthetic: { type: 'string' },
        'subset-size': { type: 'string' },
        'subset-seed': { type: 'string' },
        seed: { type: 'string' },
        translations: { type: 'string' },
        'sample-power': { type: 'boolean' },
        'synthetic-power': { type: 'boolean' },
        help: { type: 'boolean', short: 'h' },
      },
    })
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err))
    console.error(USAGE)
    return 2
  }
  const v = parsed.values
  if (v.help) {
    console.log(USAGE)
    return 0
  }

  try {
    const fromFile: Partial<ExtractionConfig> = v.config ? loadConfigFile(v.config) : {}
    const config = resolveConfig({
      ...fromFile,
      ...(v.checkpoint !== undefined && { checkpoint: v.checkpoint }),
      ...(v.out !== undefined && { outputRoot: v.out }),
      ...(v['images-dir'] !== undefined && { imagesDir: v['images-dir'] }),
      ...(v.synthetic !== undefined && { syntheticImages: Number(v.synthetic) }),
      ...(v['subset-size'] !== undefined && { subsetSize: Number(v['subset-size']) }),
      ...(v['subset-seed'] !== undefined && { subsetSeed: Number(v['subset-seed']) }),
      ...(v.seed !== undefined && { backboneSeed: Number(v.seed) }),
      ...(v.translations !== undefined && { translationsPath: v.translations }),
      ...(v['sample-power'] !== undefined && { samplePower: v['sample-power'] }),
    })
    const result = await runExtraction(
      config,
      v['synthetic-power'] ? { powerSource: syntheticPowerSource() } : {},
    )
    console.log(
      JSON.stringify(
        {
          manifest: result.manifestPath,
          images: result.imageIds.length,
          grid: `${result.gridSize}x${result.gridSize}`,
          embed_dim: result.embedDim,
          feature_files: result.featureFiles,
          text_files: result.textFiles,
          power_csv: result.powerCsvPath,
        },
        null,
        2,
      ),
    )
    return 0
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

const invokedDirectly = process.argv[1] && import.meta.url.endsWith(process.argv[1].split('/').pop()!)
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code
  })
}
