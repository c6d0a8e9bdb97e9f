import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'
import jpeg from 'jpeg-js'
import { PNG } from 'pngjs'
import { afterAll, describe, expect, it } from 'vitest'

import { loadImageEncoder } from '../dist/imageEncoder.js'
import { loadTextEncoder } from '../dist/textEncoder.js'

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'enc-'))
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }))

export function writePng(file: string, seed: number, size = 24): void {
  const png = new PNG({ width: size, height: size })
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = (y * size + x) * 4
      png.data[i] = (x * 11 + seed * 37) % 256
      png.data[i + 1] = (y * 7 + seed * 13) % 256
      png.data[i + 2] = (x * y + seed) % 256
      png.data[i + 3] = 255
    }
  }
  fs.writeFileSync(file, PNG.sync.write(png))
}

describe('text encoder', () => {
  const enc = loadTextEncoder('local-hash-16')

  it('is deterministic and width-correct', () => {
    const a = enc.encode('Wooden Train Set, Toys & Games, BrandCo')
    const b = enc.encode('Wooden Train Set, Toys & Games, BrandCo')
    expect(a).toHaveLength(16)
    expect(Array.from(a)).toEqual(Array.from(b))
  })

  it('maps empty text to a fixed non-zero empty-input vector', () => {
    const empty1 = enc.encode('')
    const empty2 = enc.encode('   ')
    expect(Array.from(empty1)).toEqual(Array.from(empty2))
    expect(Math.max(...empty1.map(Math.abs))).toBeGreaterThan(0)
  })

  it('keeps similar texts closer than unrelated ones', () => {
    const dot = (u: Float32Array, v: Float32Array) =>
      u.reduce((s, x, i) => s + x * v[i], 0)
    const base = enc.encode('wooden train set toys')
    const near = enc.encode('wooden train track toys')
    const far = enc.encode('quantum flux capacitor manual')
    expect(dot(base, near)).toBeGreaterThan(dot(base, far))
  })

  it('aborts on unknown model ids', () => {
    expect(() => loadTextEncoder('bert-base-uncased')).toThrow(/load failure/)
  })
})

describe('image encoder', () => {
  const enc = loadImageEncoder('local-patch-12')

  it('decodes png deterministically', () => {
    const file = path.join(tmp, 'img.png')
    writePng(file, 3)
    const a = enc.encode(file)!
    const b = enc.encode(file)!
    expect(a).toHaveLength(12)
    expect(Array.from(a)).toEqual(Array.from(b))
  })

  it('decodes jpeg and separates different images', () => {
    const raw = Buffer.alloc(32 * 32 * 4)
    for (let i = 0; i < raw.length; i += 4) {
      raw[i] = i % 251
      raw[i + 1] = (i * 3) % 255
      raw[i + 2] = 40
      raw[i + 3] = 255
    }
    const file = path.join(tmp, 'img.jpg')
    fs.writeFileSync(file, jpeg.encode({ data: raw, width: 32, height: 32 }, 90).data)
    const jef = enc.encode(file)!
    const pngFile = path.join(tmp, 'img2.png')
    writePng(pngFile, 9)
    const pef = enc.encode(pngFile)!
    expect(jef).toHaveLength(12)
    expect(Array.from(jef)).not.toEqual(Array.from(pef))
  })

  it('returns null for missing or undecodable files', () => {
    expect(enc.encode(undefined)).toBeNull()
    expect(enc.encode(path.join(tmp, 'nope.png'))).toBeNull()
    const garbled = path.join(tmp, 'garbled.png')
    fs.writeFileSync(garbled, Buffer.from('not an image'))
    expect(enc.encode(garbled)).toBeNull()
  })

  it('aborts on unknown model ids', () => {
    expect(() => loadImageEncoder('vit-base-patch16')).toThrow(/load failure/)
  })
})
