/**
 * Extraction pipeline: one text row and one image row per catalog item,
 * written in catalog order. Items whose text is empty still get the
 * encoder's empty-input vector; missing or unreadable images become zero
 * rows and are counted as warnings.
 */

import { CatalogEntry } from './catalog.js'
import { FeatureTable } from './hmft.js'
import { ImageEncoder } from './imageEncoder.js'
import { TextEncoder } from './textEncoder.js'

export interface ExtractionResult {
  text: FeatureTable
  image: FeatureTable
  textWarnings: number
  imageWarnings: number
}

export function extractFeatures(catalog: CatalogEntry[], textEncoder: TextEncoder,
                                imageEncoder: ImageEncoder): ExtractionResult {
  const n = catalog.length
  const text = new Float32Array(n * textEncoder.dim)
  const image = new Float32Array(n * imageEncoder.dim)
  let textWarnings = 0
  let imageWarnings = 0
  catalog.forEach((entry, row) => {
    let vector: Float32Array
    try {
      vector = textEncoder.encode(entry.text)
    } catch {
      vector = new Float32Array(textEncoder.dim)
      textWarnings += 1
    }
    text.set(vector, row * textEncoder.dim)

    const pixels = imageEncoder.encode(entry.imagePath)
    if (pixels === null) {
      imageWarnings += 1 // zero row stays in place
    } else {
      image.set(pixels, row * imageEncoder.dim)
    }
  })
  const itemIds = catalog.map((e) => e.itemId)
  return {
    text: { itemIds, dim: textEncoder.dim, values: text },
    image: { itemIds, dim: imageEncoder.dim, values: image },
    textWarnings,
    imageWarnings,
  }
}
