/** Box geometry mirroring the primary toolkit's contracts bit-for-bit.
 *
 * Boxes are half-open [min, max) in float64. The square-crop computation
 * follows the same operation order as the consumer's validator so the
 * emitted values compare exactly.
 */

import type { BinaryMask } from './image.js'

export interface Box {
  x0: number
  y0: number
  x1: number
  y1: number
}

export function tightBox(mask: BinaryMask): Box | null {
  let minX = mask.width
  let minY = mask.height
  let maxX = -1
  let maxY = -1
  for (let y = 0; y < mask.height; y++) {
    const row = y * mask.width
    for (let x = 0; x < mask.width; x++) {
      if (mask.data[row + x]) {
        if (x < minX) minX = x
        if (x > maxX) maxX = x
        if (y < minY) minY = y
        if (y > maxY) maxY = y
      }
    }
  }
  if (maxX < 0) return null
  return { x0: minX, y0: minY, x1: maxX + 1, y1: maxY + 1 }
}

function clampInterval(lo: number, side: number, limit: number): number {
  lo = Math.min(lo, limit - side)
  return Math.max(lo, 0.0)
}

/** Smallest square containing the tight box: centered, translated into
 * bounds, shrunk only when the side exceeds the image's short side. */
export function minBoundingSquare(tight: Box, imageW: number, imageH: number): Box {
  let side = Math.max(tight.x1 - tight.x0, tight.y1 - tight.y0)
  side = Math.min(side, imageW, imageH)
  const cx = 0.5 * (tight.x0 + tight.x1)
  const cy = 0.5 * (tight.y0 + tight.y1)
  const x0 = clampInterval(cx - side / 2.0, side, imageW)
  const y0 = clampInterval(cy - side / 2.0, side, imageH)
  return { x0, y0, x1: x0 + side, y1: y0 + side }
}

export function boxIou(a: Box, b: Box): number {
  const ix = Math.min(a.x1, b.x1) - Math.max(a.x0, b.x0)
  const iy = Math.min(a.y1, b.y1) - Math.max(a.y0, b.y0)
  if (ix <= 0 || iy <= 0) return 0
  const inter = ix * iy
  const areaA = (a.x1 - a.x0) * (a.y1 - a.y0)
  const areaB = (b.x1 - b.x0) * (b.y1 - b.y0)
  return inter / (areaA + areaB - inter)
}

export function toXywh(box: Box): [number, number, number, number] {
  return [box.x0, box.y0, box.x1 - box.x0, box.y1 - box.y0]
}
