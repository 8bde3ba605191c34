/** Binary feature-file interchange format.
 *
 * Layout: magic "IDFV" | u32 version | u32 dim | u64 count |
 * count x (u32 byte-length + UTF-8 id) | count x dim float32, all
 * little-endian, payload row-major. Must stay byte-compatible with the
 * consumer toolkit's reader.
 */

import * as fs from 'node:fs'

const MAGIC = Buffer.from('IDFV', 'ascii')
const VERSION = 1

export interface FeatureEntry {
  id: string
  values: Float32Array
}

export function writeFeatureFile(path: string, entries: FeatureEntry[]): void {
  if (entries.length === 0) throw new Error('refusing to write an empty feature file')
  const dim = entries[0].values.length
  const seen = new Set<string>()
  for (const entry of entries) {
    if (entry.values.length !== dim) {
      throw new Error(`dim drift: '${entry.id}' has ${entry.values.length}, expected ${dim}`)
    }
    for (const v of entry.values) {
      if (!Number.isFinite(v)) throw new Error(`non-finite value in '${entry.id}'`)
    }
    if (seen.has(entry.id)) throw new Error(`duplicate id '${entry.id}'`)
    seen.add(entry.id)
  }

  const header = Buffer.alloc(4 + 4 + 8)
  header.writeUInt32LE(VERSION, 0)
  header.writeUInt32LE(dim, 4)
  header.writeBigUInt64LE(BigInt(entries.length), 8)

  const idChunks: Buffer[] = []
  for (const entry of entries) {
    const raw = Buffer.from(entry.id, 'utf-8')
    const len = Buffer.alloc(4)
    len.writeUInt32LE(raw.length, 0)
    idChunks.push(len, raw)
  }

  const payload = Buffer.alloc(entries.length * dim * 4)
  entries.forEach((entry, row) => {
    for (let c = 0; c < dim; c++) payload.writeFloatLE(entry.values[c], (row * dim + c) * 4)
  })

  fs.writeFileSync(path, Buffer.concat([MAGIC, header, ...idChunks, payload]))
}

export function readFeatureFile(path: string): FeatureEntry[] {
  const blob = fs.readFileSync(path)
  if (blob.length < 4 || !blob.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`${path}: not a feature file`)
  }
  const version = blob.readUInt32LE(4)
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`)
  const dim = blob.readUInt32LE(8)
  const count = Number(blob.readBigUInt64LE(12))
  let offset = 20
  const ids: string[] = []
  for (let i = 0; i < count; i++) {
    const len = blob.readUInt32LE(offset)
    offset += 4
    ids.push(blob.subarray(offset, offset + len).toString('utf-8'))
    offset += len
  }
  const expected = count * dim * 4
  if (blob.length - offset !== expected) {
    throw new Error(`${path}: payload length mismatch`)
  }
  return ids.map((id, row) => {
    const values = new Float32Array(dim)
    for (let c = 0; c < dim; c++) values[c] = blob.readFloatLE(offset + (row * dim + c) * 4)
    return { id, values }
  })
}
