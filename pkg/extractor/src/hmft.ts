/**
 * HMFT feature files: a UTF-8 manifest followed by packed float32 rows.
 *
 * Header `HMFT\t1\tn_rows\tdim`, then one `item_id\toffset` line per row,
 * then n_rows * dim little-endian float32 values row-major in offset order.
 */

import * as fs from 'node:fs'

export const HMFT_MAGIC = 'HMFT'
export const HMFT_VERSION = 1

export interface FeatureTable {
  itemIds: string[]
  dim: number
  /** row-major, itemIds.length * dim entries */
  values: Float32Array
}

export function writeHmft(path: string, table: FeatureTable): void {
  const { itemIds, dim, values } = table
  if (values.length !== itemIds.length * dim) {
    throw new Error(
      `feature table has ${values.length} values for ${itemIds.length} rows x ${dim}`)
  }
  const lines = [`${HMFT_MAGIC}\t${HMFT_VERSION}\t${itemIds.length}\t${dim}\n`]
  itemIds.forEach((id, row) => {
    if (id.includes('\t') || id.includes('\n')) {
      throw new Error(`item id ${JSON.stringify(id)} cannot contain tab/newline`)
    }
    lines.push(`${id}\t${row}\n`)
  })
  const header = Buffer.from(lines.join(''), 'utf-8')
  const blob = Buffer.alloc(values.length * 4)
  for (let i = 0; i < values.length; i++) blob.writeFloatLE(values[i], i * 4)
  fs.writeFileSync(path, Buffer.concat([header, blob]))
}

export function readHmft(path: string): FeatureTable {
  const raw = fs.readFileSync(path)
  let cursor = 0
  const nextLine = (): string => {
    const end = raw.indexOf(0x0a, cursor)
    if (end < 0) throw new Error(`${path}: truncated manifest`)
    const line = raw.subarray(cursor, end).toString('utf-8')
    cursor = end + 1
    return line
  }
  const header = nextLine().split('\t')
  if (header.length !== 4 || header[0] !== HMFT_MAGIC) {
    throw new Error(`${path}: not an HMFT file`)
  }
  if (Number(header[1]) !== HMFT_VERSION) {
    throw new Error(`${path}: unsupported HMFT version ${header[1]}`)
  }
  const nRows = Number(header[2])
  const dim = Number(header[3])
  const itemIds: string[] = new Array(nRows)
  for (let i = 0; i < nRows; i++) {
    const fields = nextLine().split('\t')
    if (fields.length !== 2) throw new Error(`${path}: malformed manifest line`)
    const offset = Number(fields[1])
    if (!Number.isInteger(offset) || offset < 0 || offset >= nRows) {
      throw new Error(`${path}: bad offset ${fields[1]} for ${fields[0]}`)
    }
    itemIds[offset] = fields[0]
  }
  const expected = nRows * dim * 4
  const blob = raw.subarray(cursor)
  if (blob.length !== expected) {
    throw new Error(
      `${path}: binary section holds ${blob.length} bytes, expected ${expected}`)
  }
  const values = new Float32Array(nRows * dim)
  for (let i = 0; i < values.length; i++) values[i] = blob.readFloatLE(i * 4)
  return { itemIds, dim, values }
}
