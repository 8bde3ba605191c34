/** In-memory images and the pixel operations the pipeline needs. */

import * as fs from 'node:fs'
import { PNG } from 'pngjs'

export interface RgbaImage {
  width: number
  height: number
  /** RGBA, row-major, 4 bytes per pixel. */
  data: Uint8Array
}

export type BinaryMask = {
  width: number
  height: number
  /** One byte per pixel, 0 or 1, row-major. */
  data: Uint8Array
}

export function readPng(path: string): RgbaImage {
  const png = PNG.sync.read(fs.readFileSync(path))
  return { width: png.width, height: png.height, data: new Uint8Array(png.data) }
}

export function writePng(path: string, image: RgbaImage): void {
  const png = new PNG({ width: image.width, height: image.height })
  png.data = Buffer.from(image.data)
  fs.writeFileSync(path, PNG.sync.write(png))
}

/** 8-bit grayscale mask file (0 / 255), the lossless mask format. */
export function writeMaskPng(path: string, mask: BinaryMask): void {
  const png = new PNG({ width: mask.width, height: mask.height })
  const rgba = Buffer.alloc(mask.width * mask.height * 4)
  for (let i = 0; i < mask.data.length; i++) {
    const v = mask.data[i] ? 255 : 0
    rgba[i * 4] = v
    rgba[i * 4 + 1] = v
    rgba[i * 4 + 2] = v
    rgba[i * 4 + 3] = 255
  }
  png.data = rgba
  fs.writeFileSync(path, PNG.sync.write(png, { colorType: 0 }))
}

export function readMaskPng(path: string): BinaryMask {
  const png = PNG.sync.read(fs.readFileSync(path))
  const out = new Uint8Array(png.width * png.height)
  for (let i = 0; i < out.length; i++) out[i] = png.data[i * 4] > 0 ? 1 : 0
  return { width: png.width, height: png.height, data: out }
}

/** Bilinear resize with pixel-center alignment. */
export function resizeBilinear(image: RgbaImage, outWidth: number, outHeight: number): RgbaImage {
  const { width, height, data } = image
  const out = new Uint8Array(outWidth * outHeight * 4)
  const sx = width / outWidth
  const sy = height / outHeight
  for (let y = 0; y < outHeight; y++) {
    const fy = (y + 0.5) * sy - 0.5
    const y0 = Math.max(0, Math.min(height - 1, Math.floor(fy)))
    const y1 = Math.min(height - 1, y0 + 1)
    const wy = Math.min(1, Math.max(0, fy - y0))
    for (let x = 0; x < outWidth; x++) {
      const fx = (x + 0.5) * sx - 0.5
      const x0 = Math.max(0, Math.min(width - 1, Math.floor(fx)))
      const x1 = Math.min(width - 1, x0 + 1)
      const wx = Math.min(1, Math.max(0, fx - x0))
      const o = (y * outWidth + x) * 4
      for (let c = 0; c < 4; c++) {
        const p00 = data[(y0 * width + x0) * 4 + c]
        const p01 = data[(y0 * width + x1) * 4 + c]
        const p10 = data[(y1 * width + x0) * 4 + c]
        const p11 = data[(y1 * width + x1) * 4 + c]
        const top = p00 + (p01 - p00) * wx
        const bottom = p10 + (p11 - p10) * wx
        out[o + c] = Math.round(top + (bottom - top) * wy)
      }
    }
  }
  return { width: outWidth, height: outHeight, data: out }
}

/** Nearest-neighbor mask mapping between resolutions (pixel-center aligned). */
export function mapMask(mask: BinaryMask, outWidth: number, outHeight: number): BinaryMask {
  const out = new Uint8Array(outWidth * outHeight)
  const sx = mask.width / outWidth
  const sy = mask.height / outHeight
  for (let y = 0; y < outHeight; y++) {
    const srcY = Math.min(mask.height - 1, Math.floor((y + 0.5) * sy))
    for (let x = 0; x < outWidth; x++) {
      const srcX = Math.min(mask.width - 1, Math.floor((x + 0.5) * sx))
      out[y * outWidth + x] = mask.data[srcY * mask.width + srcX]
    }
  }
  return { width: outWidth, height: outHeight, data: out }
}

export function cropImage(
  image: RgbaImage,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): RgbaImage {
  const cw = x1 - x0
  const ch = y1 - y0
  const out = new Uint8Array(cw * ch * 4)
  for (let y = 0; y < ch; y++) {
    const src = ((y0 + y) * image.width + x0) * 4
    out.set(image.data.subarray(src, src + cw * 4), y * cw * 4)
  }
  return { width: cw, height: ch, data: out }
}

export function cropMask(mask: BinaryMask, x0: number, y0: number, x1: number, y1: number): BinaryMask {
  const cw = x1 - x0
  const ch = y1 - y0
  const out = new Uint8Array(cw * ch)
  for (let y = 0; y < ch; y++) {
    out.set(mask.data.subarray((y0 + y) * mask.width + x0, (y0 + y) * mask.width + x1), y * cw)
  }
  return { width: cw, height: ch, data: out }
}

/** Zero every pixel outside the mask (background fill is black). */
export function removeBackground(image: RgbaImage, mask: BinaryMask): RgbaImage {
  if (mask.width !== image.width || mask.height !== image.height) {
    throw new Error(
      `mask ${mask.width}x${mask.height} does not cover image ${image.width}x${image.height}`,
    )
  }
  const out = new Uint8Array(image.data)
  for (let i = 0; i < mask.data.length; i++) {
    if (!mask.data[i]) {
      out[i * 4] = 0
      out[i * 4 + 1] = 0
      out[i * 4 + 2] = 0
    }
  }
  return { width: image.width, height: image.height, data: out }
}

/** Alpha channel as a binary mask (>=128 counts as foreground). */
export function alphaMask(image: RgbaImage): BinaryMask {
  const out = new Uint8Array(image.width * image.height)
  for (let i = 0; i < out.length; i++) out[i] = image.data[i * 4 + 3] >= 128 ? 1 : 0
  return { width: image.width, height: image.height, data: out }
}
