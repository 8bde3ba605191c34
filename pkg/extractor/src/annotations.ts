/** Annotation-schema documents (version 1), the consumer's neutral format. */

import * as fs from 'node:fs'
import type { Box } from './geometry.js'
import { toXywh } from './geometry.js'

export const SCHEMA_VERSION = 1

export interface ImageEntry {
  id: string
  file: string
  width: number
  height: number
  scene_tag: 'easy' | 'hard'
}

export interface ProposalEntry {
  image_id: string
  proposal_id: string
  box: Box
  mask_file: string
  square_crop: Box
}

export function writeProposalTable(
  path: string,
  images: ImageEntry[],
  proposals: ProposalEntry[],
): void {
  const doc = {
    version: SCHEMA_VERSION,
    images,
    instances: [],
    annotations: [],
    proposals: proposals.map((p) => ({
      image_id: p.image_id,
      proposal_id: p.proposal_id,
      bbox: toXywh(p.box),
      mask_file: p.mask_file,
      square_crop: toXywh(p.square_crop),
    })),
  }
  fs.writeFileSync(path, JSON.stringify(doc, null, 2) + '\n')
}

export interface ProposalTable {
  images: ImageEntry[]
  proposals: { image_id: string; proposal_id: string; box: Box; mask_file?: string; square_crop?: Box }[]
}

function fromXywh(raw: number[]): Box {
  const [x, y, w, h] = raw
  if (w <= 0 || h <= 0) throw new Error(`degenerate bbox ${JSON.stringify(raw)}`)
  return { x0: x, y0: y, x1: x + w, y1: y + h }
}

export function readProposalTable(path: string): ProposalTable {
  const doc = JSON.parse(fs.readFileSync(path, 'utf-8'))
  if (doc.version !== SCHEMA_VERSION) {
    throw new Error(`${path}: unsupported schema version ${doc.version}`)
  }
  return {
    images: doc.images ?? [],
    proposals: (doc.proposals ?? []).map((p: any) => ({
      image_id: String(p.image_id),
      proposal_id: String(p.proposal_id),
      box: fromXywh(p.bbox),
      mask_file: p.mask_file,
      square_crop: p.square_crop ? fromXywh(p.square_crop) : undefined,
    })),
  }
}
