import * as fs from 'node:fs'
import * as path from 'node:path'
import * as os from 'node:os'
import { writePng } from '../src/image.js'
import type { RgbaImage } from '../src/image.js'

export function tmpDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix))
}

/** Solid bright disk on a plain dark background, hard edged. */
export function diskImage(
  width: number,
  height: number,
  cx: number,
  cy: number,
  radius: number,
): RgbaImage {
  const data = new Uint8Array(width * height * 4)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const inside = (x + 0.5 - cx) ** 2 + (y + 0.5 - cy) ** 2 <= radius * radius
      const o = (y * width + x) * 4
      data[o] = inside ? 230 : 30
      data[o + 1] = inside ? 80 : 40
      data[o + 2] = inside ? 60 : 50
      data[o + 3] = 255
    }
  }
  return { width, height, data }
}

/** Analytic pixel footprint of the disk: the tight box of covered centers. */
export function diskTightBox(
  width: number,
  height: number,
  cx: number,
  cy: number,
  radius: number,
): [number, number, number, number] {
  let minX = width
  let minY = height
  let maxX = -1
  let maxY = -1
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if ((x + 0.5 - cx) ** 2 + (y + 0.5 - cy) ** 2 <= radius * radius) {
        if (x < minX) minX = x
        if (x > maxX) maxX = x
        if (y < minY) minY = y
        if (y > maxY) maxY = y
      }
    }
  }
  return [minX, minY, maxX + 1, maxY + 1]
}

export function writeDiskScene(
  dir: string,
  name: string,
  width = 256,
  height = 192,
  cx = 120,
  cy = 90,
  radius = 45,
): string {
  fs.mkdirSync(dir, { recursive: true })
  const file = path.join(dir, `${name}.png`)
  writePng(file, diskImage(width, height, cx, cy, radius))
  return file
}

/** RGBA profile view: opaque blob with transparent surround. */
export function profileView(side: number, seed: number): RgbaImage {
  const data = new Uint8Array(side * side * 4)
  const c = side / 2
  const r = side * 0.4
  for (let y = 0; y < side; y++) {
    for (let x = 0; x < side; x++) {
      const inside = (x + 0.5 - c) ** 2 + (y + 0.5 - c) ** 2 <= r * r
      const o = (y * side + x) * 4
      data[o] = (60 + seed * 37) % 255
      data[o + 1] = (140 + seed * 83) % 255
      data[o + 2] = (200 + seed * 11) % 255
      data[o + 3] = inside ? 255 : 0
    }
  }
  return { width: side, height: side, data }
}
