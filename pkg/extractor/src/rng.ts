/**
 * Deterministic pseudo-random streams keyed by string labels, so projection
 * weights and token embeddings are identical across runs and platforms.
 */

/** FNV-1a 64-bit over UTF-8 bytes, returned as four 16-bit words. */
function fnv1a64(text: string): [number, number, number, number] {
  const bytes = Buffer.from(text, 'utf-8')
  let lo = 0x84222325
  let hi = 0xcbf29ce4
  for (const b of bytes) {
    lo ^= b
    // 64-bit multiply by the FNV prime 0x100000001b3, in 32-bit halves
    const newLo = (lo >>> 0) * 0x1b3 + (((lo >>> 0) * 0x1000000) % 0x100000000)
    hi = ((hi >>> 0) * 0x1b3 + (lo >>> 0) + Math.floor(newLo / 0x100000000)) >>> 0
    lo = newLo >>> 0
  }
  return [lo & 0xffff, (lo >>> 16) & 0xffff, hi & 0xffff, (hi >>> 16) & 0xffff]
}

/** sfc32 generator seeded from a label; uniform draws in [0, 1). */
export function seededStream(label: string): () => number {
  let [a, b, c, d] = fnv1a64(label)
  a = (a | 0x9e37) >>> 0
  b = (b | 0x79b9) >>> 0
  c = (c | 0x85eb) >>> 0
  d = (d | 0xca6b) >>> 0
  for (let i = 0; i < 12; i++) sfc32Step()
  function sfc32Step(): number {
    a >>>= 0; b >>>= 0; c >>>= 0; d >>>= 0
    const t = (a + b) | 0
    a = b ^ (b >>> 9)
    b = (c + (c << 3)) | 0
    c = (c << 21) | (c >>> 11)
    d = (d + 1) | 0
    const out = (t + d) | 0
    c = (c + out) | 0
    return (out >>> 0) / 4294967296
  }
  return sfc32Step
}

/** Standard normal draws via Box-Muller over the seeded stream. */
export function seededGaussians(label: string, count: number): Float32Array {
  const uniform = seededStream(label)
  const out = new Float32Array(count)
  for (let i = 0; i < count; i += 2) {
    const u = Math.max(uniform(), 1e-12)
    const v = uniform()
    const r = Math.sqrt(-2 * Math.log(u))
    out[i] = r * Math.cos(2 * Math.PI * v)
    if (i + 1 < count) out[i + 1] = r * Math.sin(2 * Math.PI * v)
  }
  return out
}
