/**
 * Text encoders producing one fixed-width vector per item, CLS-style.
 *
 * The built-in `local-hash-<dim>` encoder is fully deterministic and needs
 * no downloaded weights: each token (and adjacent bigram) maps to a hashed
 * Gaussian vector, pooled and L2-normalized. External model ids are
 * accepted at the interface but abort when no backend can load them.
 */

import { seededGaussians } from './rng.js'

export interface TextEncoder {
  readonly id: string
  readonly dim: number
  encode(text: string): Float32Array
}

const EMPTY_TOKEN = '[cls-empty]'

export class HashedTextEncoder implements TextEncoder {
  readonly id: string
  readonly dim: number
  private cache = new Map<string, Float32Array>()

  constructor(dim: number) {
    if (!Number.isInteger(dim) || dim < 4) {
      throw new Error(`text encoder width must be an integer >= 4, got ${dim}`)
    }
    this.dim = dim
    this.id = `local-hash-${dim}`
  }

  private tokenVector(token: string): Float32Array {
    let vec = this.cache.get(token)
    if (!vec) {
      vec = seededGaussians(`txt-token:${this.dim}:${token}`, this.dim)
      this.cache.set(token, vec)
    }
    return vec
  }

  encode(text: string): Float32Array {
    const tokens = text.toLowerCase().split(/[^a-z0-9]+/).filter((t) => t !== '')
    const out = new Float32Array(this.dim)
    const units = tokens.length === 0 ? [EMPTY_TOKEN] : tokens.slice()
    for (let i = 0; i + 1 < tokens.length; i++) {
      units.push(`${tokens[i]}_${tokens[i + 1]}`)
    }
    for (const unit of units) {
      const vec = this.tokenVector(unit)
      for (let i = 0; i < this.dim; i++) out[i] += vec[i]
    }
    let norm = 0
    for (let i = 0; i < this.dim; i++) norm += out[i] * out[i]
    norm = Math.sqrt(norm) || 1
    for (let i = 0; i < this.dim; i++) out[i] /= norm
    return out
  }
}

const LOCAL_PATTERN = /^local-hash-(\d+)$/

export function loadTextEncoder(modelId: string): TextEncoder {
  const local = LOCAL_PATTERN.exec(modelId)
  if (local) return new HashedTextEncoder(Number(local[1]))
  throw new Error(
    `text encoder load failure: no backend available for ${JSON.stringify(modelId)}; ` +
    `use local-hash-<dim>`)
}
