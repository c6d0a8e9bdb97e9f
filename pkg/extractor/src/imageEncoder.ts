/**
 * Image encoders: decode, resize to a fixed resolution, split into patches,
 * project each patch with seeded weights, and mean-pool to one CLS-style
 * vector. The built-in `local-patch-<dim>` backend is deterministic and
 * reads PNG and JPEG files; anything it cannot decode is reported so the
 * caller can fall back to a zero row.
 */

import * as fs from 'node:fs'
import jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

import { seededGaussians } from './rng.js'

export interface ImageEncoder {
  readonly id: string
  readonly dim: number
  /** Returns null when the file is missing or undecodable. */
  encode(imagePath: string | undefined): Float32Array | null
}

const SIDE = 32
const PATCH = 8
const GRID = SIDE / PATCH
const PATCH_VALUES = PATCH * PATCH * 3

interface Decoded {
  width: number
  height: number
  data: Uint8Array // RGBA
}

function decode(buffer: Buffer): Decoded | null {
  if (buffer.length >= 8 && buffer[0] === 0x89 && buffer[1] === 0x50) {
    const png = PNG.sync.read(buffer)
    return { width: png.width, height: png.height, data: png.data }
  }
  if (buffer.length >= 2 && buffer[0] === 0xff && buffer[1] === 0xd8) {
    const out = jpeg.decode(buffer, { useTArray: true })
    return { width: out.width, height: out.height, data: out.data }
  }
  return null
}

/** Bilinear resample to SIDE x SIDE RGB in [0, 1]. */
function resize(image: Decoded): Float32Array {
  const out = new Float32Array(SIDE * SIDE * 3)
  for (let y = 0; y < SIDE; y++) {
    const sy = ((y + 0.5) / SIDE) * image.height - 0.5
    const y0 = Math.max(0, Math.floor(sy))
    const y1 = Math.min(image.height - 1, y0 + 1)
    const wy = sy - y0
    for (let x = 0; x < SIDE; x++) {
      const sx = ((x + 0.5) / SIDE) * image.width - 0.5
      const x0 = Math.max(0, Math.floor(sx))
      const x1 = Math.min(image.width - 1, x0 + 1)
      const wx = sx - x0
      for (let c = 0; c < 3; c++) {
        const p00 = image.data[(y0 * image.width + x0) * 4 + c]
        const p01 = image.data[(y0 * image.width + x1) * 4 + c]
        const p10 = image.data[(y1 * image.width + x0) * 4 + c]
        const p11 = image.data[(y1 * image.width + x1) * 4 + c]
        const top = p00 * (1 - wx) + p01 * wx
        const bottom = p10 * (1 - wx) + p11 * wx
        out[(y * SIDE + x) * 3 + c] = (top * (1 - wy) + bottom * wy) / 255
      }
    }
  }
  return out
}

export class PatchProjectionEncoder implements ImageEncoder {
  readonly id: string
  readonly dim: number
  private projection: Float32Array

  constructor(dim: number) {
    if (!Number.isInteger(dim) || dim < 4) {
      throw new Error(`image encoder width must be an integer >= 4, got ${dim}`)
    }
    this.dim = dim
    this.id = `local-patch-${dim}`
    this.projection = seededGaussians(`img-proj:${dim}`, PATCH_VALUES * dim)
  }

  encode(imagePath: string | undefined): Float32Array | null {
    if (!imagePath || !fs.existsSync(imagePath)) return null
    let decoded: Decoded | null
    try {
      decoded = decode(fs.readFileSync(imagePath))
    } catch {
      decoded = null
    }
    if (!decoded) return null

    const pixels = resize(decoded)
    const pooled = new Float32Array(this.dim)
    const patch = new Float32Array(PATCH_VALUES)
    for (let gy = 0; gy < GRID; gy++) {
      for (let gx = 0; gx < GRID; gx++) {
        let k = 0
        for (let py = 0; py < PATCH; py++) {
          for (let px = 0; px < PATCH; px++) {
            const y = gy * PATCH + py
            const x = gx * PATCH + px
            for (let c = 0; c < 3; c++) patch[k++] = pixels[(y * SIDE + x) * 3 + c]
          }
        }
        for (let j = 0; j < this.dim; j++) {
          let dot = 0
          for (let i = 0; i < PATCH_VALUES; i++) {
            dot += patch[i] * this.projection[i * this.dim + j]
          }
          pooled[j] += Math.tanh(dot / Math.sqrt(PATCH_VALUES))
        }
      }
    }
    let norm = 0
    for (let j = 0; j < this.dim; j++) {
      pooled[j] /= GRID * GRID
      norm += pooled[j] * pooled[j]
    }
    norm = Math.sqrt(norm) || 1
    for (let j = 0; j < this.dim; j++) pooled[j] /= norm
    return pooled
  }
}

const LOCAL_PATTERN = /^local-patch-(\d+)$/

export function loadImageEncoder(modelId: string): ImageEncoder {
  const local = LOCAL_PATTERN.exec(modelId)
  if (local) return new PatchProjectionEncoder(Number(local[1]))
  throw new Error(
    `image encoder load failure: no backend available for ${JSON.stringify(modelId)}; ` +
    `use local-patch-<dim>`)
}
