import fs from 'node:fs'

import { createRng, gaussian } from './prng.js'
import { profileFor } from './vit.js'

/**
 * Per-language concept translations. The table ships with the repo as
 * versioned data (translation strings are a best-effort stand-in, see
 * data/translations.json); language resource classes ride along so the
 * grouping is data, not code.
 */
export interface TranslationTable {
  version: string
  reference_language: string
  languages: { code: string; resource_class: 'high' | 'low' | 'reference' }[]
  concepts: string[]
  /** translations[language][concept] = surface string */
  translations: Record<string, Record<string, string>>
}

export function loadTranslations(filePath: string): TranslationTable {
  const table = JSON.parse(fs.readFileSync(filePath, 'utf8')) as TranslationTable
  for (const { code } of table.languages) {
    const entry = table.translations[code]
    if (!entry) throw new Error(`missing translations for language ${code}`)
    for (const concept of table.concepts) {
      const text = entry[concept]
      if (text === undefined) {
        throw new Error(`missing translation for (${code}, ${concept})`)
      }
      if (text.trim() === '') {
        throw new Error(`empty translation for (${code}, ${concept})`)
      }
    }
  }
  return table
}

/**
 * Deterministic text-tower stand-in: the embedding is a pure function of
 * (checkpoint, surface string), so the same concept encodes identically
 * on repeat calls and identical surface forms share an embedding.
 * Vectors are L2-normalized before storage; cosine similarity makes the
 * scale immaterial either way.
 */
export function encodeConcept(checkpoint: string, text: string): Float32Array {
  if (text.trim() === '') throw new Error('empty translation string')
  const dim = profileFor(checkpoint).outputDim
  const gauss = gaussian(createRng(`text|${checkpoint}|${text}`))
  const vec = new Float64Array(dim)
  let normSq = 0
  for (let i = 0; i < dim; i++) {
    vec[i] = gauss()
    normSq += vec[i]! * vec[i]!
  }
  const inv = 1 / Math.sqrt(normSq)
  const out = new Float32Array(dim)
  for (let i = 0; i < dim; i++) out[i] = Math.fround(vec[i]! * inv)
  return out
}
