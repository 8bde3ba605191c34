/** The two extraction passes: proposal masks and crop embeddings. */

import * as fs from 'node:fs'
import * as path from 'node:path'
import type { ExtractorConfig } from './config.js'
import type { FeatureEntry } from './featurefile.js'
import {
  alphaMask,
  cropImage,
  cropMask,
  mapMask,
  readMaskPng,
  readPng,
  removeBackground,
  resizeBilinear,
  writeMaskPng,
  type RgbaImage,
} from './image.js'
import { minBoundingSquare, tightBox } from './geometry.js'
import { getSegmenter } from './segment.js'
import { getEmbedder } from './embed.js'
import {
  writeProposalTable,
  readProposalTable,
  type ImageEntry,
  type ProposalEntry,
} from './annotations.js'

export interface ImageInput {
  id: string
  path: string
}

/** Segment every image and emit a proposal table plus per-proposal masks.
 *
 * Images are resized to the configured segmentation size, masks are mapped
 * back to the original resolution, and each proposal carries its tight box
 * plus the minimum bounding square used for feature crops.
 */
export function extractProposals(
  inputs: ImageInput[],
  config: ExtractorConfig,
  outDir: string,
): { table: string; proposals: number } {
  const segment = getSegmenter(config.segmenter)
  fs.mkdirSync(path.join(outDir, 'masks'), { recursive: true })
  const images: ImageEntry[] = []
  const proposals: ProposalEntry[] = []
  for (const input of inputs) {
    const original = readPng(input.path)
    images.push({
      id: input.id,
      file: path.basename(input.path),
      width: original.width,
      height: original.height,
      scene_tag: 'easy',
    })
    const [segH, segW] = config.samImageSize
    const resized =
      original.width === segW && original.height === segH
        ? original
        : resizeBilinear(original, segW, segH)
    const masks = segment(resized, config)
    let index = 0
    for (const mask of masks) {
      const mapped = mapMask(mask, original.width, original.height)
      const tight = tightBox(mapped)
      if (!tight) continue
      const square = minBoundingSquare(tight, original.width, original.height)
      const proposalId = `p${String(index).padStart(3, '0')}`
      const maskFile = path.posix.join('masks', `${input.id}_${proposalId}.png`)
      writeMaskPng(path.join(outDir, maskFile), mapped)
      proposals.push({
        image_id: input.id,
        proposal_id: proposalId,
        box: tight,
        mask_file: maskFile,
        square_crop: square,
      })
      index++
    }
  }
  const table = path.join(outDir, 'proposals.json')
  writeProposalTable(table, images, proposals)
  return { table, proposals: proposals.length }
}

function resizeIfLarger(crop: RgbaImage, size: number): RgbaImage {
  if (Math.max(crop.width, crop.height) <= size) return crop
  return resizeBilinear(crop, size, size)
}

/** Embed each proposal's square crop from its source image. */
export function embedProposalCrops(
  tablePath: string,
  imagesRoot: string,
  config: ExtractorConfig,
): FeatureEntry[] {
  const embedder = getEmbedder(config.embedder)
  const table = readProposalTable(tablePath)
  const tableDir = path.dirname(tablePath)
  const entries: FeatureEntry[] = []
  for (const image of table.images) {
    const source = readPng(path.join(imagesRoot, image.file))
    for (const proposal of table.proposals) {
      if (proposal.image_id !== image.id) continue
      const square = proposal.square_crop ?? proposal.box
      const x0 = Math.max(0, Math.floor(square.x0))
      const y0 = Math.max(0, Math.floor(square.y0))
      const x1 = Math.min(source.width, Math.ceil(square.x1))
      const y1 = Math.min(source.height, Math.ceil(square.y1))
      if (x1 <= x0 || y1 <= y0) continue
      let crop = cropImage(source, x0, y0, x1, y1)
      if (config.backgroundRemoval && proposal.mask_file) {
        const mask = readMaskPng(path.join(tableDir, proposal.mask_file))
        crop = removeBackground(crop, cropMask(mask, x0, y0, x1, y1))
      }
      crop = resizeIfLarger(crop, config.cropInputSize)
      entries.push({
        id: `${image.id}/${proposal.proposal_id}`,
        values: embedder.embed(crop),
      })
    }
  }
  return entries
}

/** Embed profile views laid out as `<objectsRoot>/<instance_id>/*.png`.
 *
 * The view's alpha channel is its foreground mask; with background removal
 * enabled, pixels outside it are zeroed before embedding.
 */
export function embedProfiles(objectsRoot: string, config: ExtractorConfig): FeatureEntry[] {
  const embedder = getEmbedder(config.embedder)
  const entries: FeatureEntry[] = []
  const instances = fs
    .readdirSync(objectsRoot, { withFileTypes: true })
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort()
  for (const instance of instances) {
    const dir = path.join(objectsRoot, instance)
    const views = fs
      .readdirSync(dir)
      .filter((f) => f.toLowerCase().endsWith('.png'))
      .sort()
    views.forEach((file, viewIndex) => {
      let view = readPng(path.join(dir, file))
      if (config.backgroundRemoval) {
        view = removeBackground(view, alphaMask(view))
      }
      view = resizeIfLarger(view, config.cropInputSize)
      entries.push({ id: `${instance}/${viewIndex}`, values: embedder.embed(view) })
    })
  }
  if (entries.length === 0) throw new Error(`no profile views under ${objectsRoot}`)
  return entries
}
