/** Class-agnostic automatic mask generation.
 *
 * Backends are pluggable by identifier. The built-in `grid-flood` backend
 * seeds a point grid over the resized image and region-grows at several
 * color tolerances, keeping every granularity level per seed (tight part,
 * mid region, whole object) the way an automatic mask generator emits
 * part/whole alternatives. Heavyweight pretrained segmenters can be
 * registered under their own identifiers without touching the pipeline.
 */

import type { BinaryMask, RgbaImage } from './image.js'
import type { ExtractorConfig } from './config.js'
import { boxIou, tightBox } from './geometry.js'

export type Segmenter = (image: RgbaImage, config: ExtractorConfig) => BinaryMask[]

const NEIGHBORS = [
  [1, 0],
  [-1, 0],
  [0, 1],
  [0, -1],
] as const

function floodFrom(
  image: RgbaImage,
  seed: number,
  tolerance: number,
  claimed: Int32Array,
  regionId: number,
): Uint8Array | null {
  const { width, height, data } = image
  const mask = new Uint8Array(width * height)
  const stack: number[] = [seed]
  const r0 = data[seed * 4]
  const g0 = data[seed * 4 + 1]
  const b0 = data[seed * 4 + 2]
  mask[seed] = 1
  claimed[seed] = regionId
  let size = 0
  while (stack.length > 0) {
    const p = stack.pop() as number
    size++
    const px = p % width
    const py = (p - px) / width
    for (const [dx, dy] of NEIGHBORS) {
      const nx = px + dx
      const ny = py + dy
      if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue
      const n = ny * width + nx
      if (mask[n]) continue
      const dr = Math.abs(data[n * 4] - r0)
      const dg = Math.abs(data[n * 4 + 1] - g0)
      const db = Math.abs(data[n * 4 + 2] - b0)
      if (Math.max(dr, dg, db) > tolerance) continue
      mask[n] = 1
      claimed[n] = regionId
      stack.push(n)
    }
  }
  return size > 0 ? mask : null
}

export const gridFloodSegment: Segmenter = (image, config) => {
  const { width, height } = image
  const total = width * height
  const maxPx = Math.floor(total * config.maxRegionFraction)
  const masks: BinaryMask[] = []
  const boxes: ReturnType<typeof tightBox>[] = []
  for (const tolerance of config.tolerances) {
    const claimed = new Int32Array(total).fill(-1)
    let regionId = 0
    for (let sy = config.gridStride >> 1; sy < height; sy += config.gridStride) {
      for (let sx = config.gridStride >> 1; sx < width; sx += config.gridStride) {
        const seed = sy * width + sx
        if (claimed[seed] >= 0) continue
        const data = floodFrom(image, seed, tolerance, claimed, regionId++)
        if (!data) continue
        let size = 0
        for (let i = 0; i < data.length; i++) size += data[i]
        if (size < config.minRegionPx || size > maxPx) continue
        const mask: BinaryMask = { width, height, data }
        const box = tightBox(mask)
        if (!box) continue
        // drop near-duplicates of an already kept granularity
        let dup = false
        for (let k = 0; k < masks.length; k++) {
          const other = boxes[k]
          if (other && boxIou(box, other) > 0.97 && sameMask(mask, masks[k])) {
            dup = true
            break
          }
        }
        if (!dup) {
          masks.push(mask)
          boxes.push(box)
        }
      }
    }
  }
  return masks
}

function sameMask(a: BinaryMask, b: BinaryMask): boolean {
  let inter = 0
  let union = 0
  for (let i = 0; i < a.data.length; i++) {
    const av = a.data[i]
    const bv = b.data[i]
    inter += av & bv
    union += av | bv
  }
  return union > 0 && inter / union > 0.97
}

const SEGMENTERS: Record<string, Segmenter> = {
  'grid-flood': gridFloodSegment,
}

export function getSegmenter(identifier: string): Segmenter {
  const segmenter = SEGMENTERS[identifier]
  if (!segmenter) {
    const known = Object.keys(SEGMENTERS).join(', ')
    throw new Error(
      `unknown segmenter '${identifier}' (available: ${known}); ` +
        `pretrained mask generators must be registered with their weights`,
    )
  }
  return segmenter
}

export function registerSegmenter(identifier: string, segmenter: Segmenter): void {
  SEGMENTERS[identifier] = segmenter
}
