/**
 * Catalog inputs: items.tsv fixes the row order, texts.tsv contributes the
 * title/categories/brand phrases, and an image directory holds one file per
 * item id (png or jpeg).
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

export interface CatalogEntry {
  itemId: string
  /** concatenated title, category and brand phrases; may be empty */
  text: string
  imagePath?: string
}

function readLines(file: string): string[] {
  return fs.readFileSync(file, 'utf-8').split('\n').filter((l) => l.length > 0)
}

/** items.tsv: `item_id<TAB>cat0,cat1,...` (category field may be empty). */
export function readItemIds(itemsFile: string): string[] {
  const ids: string[] = []
  const seen = new Set<string>()
  readLines(itemsFile).forEach((line, i) => {
    const fields = line.split('\t')
    if (fields.length < 1 || fields.length > 2 || fields[0] === '') {
      throw new Error(`${itemsFile}: malformed line ${i + 1}`)
    }
    if (seen.has(fields[0])) {
      throw new Error(`${itemsFile}: duplicate item ${fields[0]} on line ${i + 1}`)
    }
    seen.add(fields[0])
    ids.push(fields[0])
  })
  return ids
}

/** texts.tsv: `item_id<TAB>title<TAB>categories<TAB>brand`. */
export function readTexts(textsFile: string): Map<string, string> {
  const texts = new Map<string, string>()
  readLines(textsFile).forEach((line, i) => {
    const fields = line.split('\t')
    if (fields.length !== 4) {
      throw new Error(`${textsFile}: expected 4 tab-separated fields on line ${i + 1}`)
    }
    const [itemId, title, categories, brand] = fields
    texts.set(itemId, [title, categories, brand].filter((f) => f !== '').join(' '))
  })
  return texts
}

const IMAGE_EXTENSIONS = ['.png', '.jpg', '.jpeg']

export function findImage(imagesDir: string | undefined,
                          itemId: string): string | undefined {
  if (!imagesDir) return undefined
  for (const ext of IMAGE_EXTENSIONS) {
    const candidate = path.join(imagesDir, itemId + ext)
    if (fs.existsSync(candidate)) return candidate
  }
  return undefined
}

export function loadCatalog(itemsFile: string, textsFile: string,
                            imagesDir?: string): CatalogEntry[] {
  const texts = readTexts(textsFile)
  return readItemIds(itemsFile).map((itemId) => ({
    itemId,
    text: texts.get(itemId) ?? '',
    imagePath: findImage(imagesDir, itemId),
  }))
}
