/**
 * extract --items items.tsv --texts texts.tsv --images DIR
 *         --out-txt F --out-img F [--text-model ID] [--image-model ID]
 */

import { parseArgs } from 'node:util'
import * as process from 'node:process'

import { loadCatalog } from './catalog.js'
import { extractFeatures } from './extract.js'
import { writeHmft } from './hmft.js'
import { loadImageEncoder } from './imageEncoder.js'
import { loadTextEncoder } from './textEncoder.js'

export function run(argv: string[]): number {
  const positionals = argv[0] === 'extract' ? argv.slice(1) : argv
  const { values } = parseArgs({
    args: positionals,
    options: {
      items: { type: 'string' },
      texts: { type: 'string' },
      images: { type: 'string' },
      'out-txt': { type: 'string' },
      'out-img': { type: 'string' },
      'text-model': { type: 'string', default: 'local-hash-64' },
      'image-model': { type: 'string', default: 'local-patch-64' },
    },
  })
  for (const required of ['items', 'texts', 'out-txt', 'out-img'] as const) {
    if (!values[required]) {
      process.stderr.write(`missing required --${required}\n`)
      return 2
    }
  }

  let textEncoder, imageEncoder
  try {
    textEncoder = loadTextEncoder(values['text-model']!)
    imageEncoder = loadImageEncoder(values['image-model']!)
  } catch (err) {
    process.stderr.write(`${(err as Error).message}\n`)
    return 1
  }

  const catalog = loadCatalog(values.items!, values.texts!, values.images)
  const result = extractFeatures(catalog, textEncoder, imageEncoder)
  writeHmft(values['out-txt']!, result.text)
  writeHmft(values['out-img']!, result.image)
  process.stdout.write(JSON.stringify({
    items: catalog.length,
    text_model: textEncoder.id,
    image_model: imageEncoder.id,
    text_warnings: result.textWarnings,
    image_warnings: result.imageWarnings,
    out_txt: values['out-txt'],
    out_img: values['out-img'],
  }) + '\n')
  return 0
}

