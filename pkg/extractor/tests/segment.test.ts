import * as fs from 'node:fs'
import * as path from 'node:path'
import { describe, expect, it } from 'vitest'
import { withDefaults } from '../src/config.js'
import { boxIou, tightBox } from '../src/geometry.js'
import { mapMask, readMaskPng, resizeBilinear } from '../src/image.js'
import { gridFloodSegment } from '../src/segment.js'
import { extractProposals } from '../src/pipeline.js'
import { readProposalTable } from '../src/annotations.js'
import { diskImage, diskTightBox, tmpDir, writeDiskScene } from './helpers.js'

const FAST = withDefaults({
  samImageSize: [192, 256],
  gridStride: 16,
  minRegionPx: 32,
})

describe('grid-flood segmentation', () => {
  it('finds a solid disk within 2 px per edge of the analytic footprint', () => {
    const dir = tmpDir('seg-')
    writeDiskScene(dir, 'scene0', 256, 192, 120, 90, 45)
    const out = path.join(dir, 'out')
    // image already at segmentation size: no resampling error in this check
    extractProposals([{ id: 'scene0', path: path.join(dir, 'scene0.png') }], FAST, out)
    const table = readProposalTable(path.join(out, 'proposals.json'))
    expect(table.proposals.length).toBeGreaterThanOrEqual(1)
    const want = diskTightBox(256, 192, 120, 90, 45)
    const hit = table.proposals.some((p) => {
      const got = [p.box.x0, p.box.y0, p.box.x1, p.box.y1]
      return got.every((v, k) => Math.abs(v - want[k]) <= 2)
    })
    expect(hit).toBe(true)
  })

  it('emits every granularity level for nested structures', () => {
    // darker ring around a bright core: tight tolerance finds the core,
    // looser tolerances grow across the ring (part vs whole alternatives)
    const width = 128
    const height = 128
    const data = new Uint8Array(width * height * 4)
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const d = Math.hypot(x + 0.5 - 64, y + 0.5 - 64)
        const o = (y * width + x) * 4
        let v = 20
        if (d <= 18) v = 220
        else if (d <= 34) v = 200
        data[o] = data[o + 1] = data[o + 2] = v
        data[o + 3] = 255
      }
    }
    const masks = gridFloodSegment({ width, height, data }, withDefaults({
      samImageSize: [height, width],
      gridStride: 8,
      minRegionPx: 16,
      tolerances: [8, 30, 60],
    }))
    const boxes = masks.map((m) => tightBox(m)!)
    const sides = boxes.map((b) => b.x1 - b.x0).sort((a, b) => a - b)
    // at least one core-sized and one whole-object-sized proposal
    expect(sides.some((s) => s <= 40)).toBe(true)
    expect(sides.some((s) => s >= 60)).toBe(true)
  })

  it('is deterministic', () => {
    const image = diskImage(128, 96, 60, 48, 30)
    const cfg = withDefaults({ samImageSize: [96, 128], gridStride: 16, minRegionPx: 16 })
    const a = gridFloodSegment(image, cfg)
    const b = gridFloodSegment(image, cfg)
    expect(a.length).toBe(b.length)
    a.forEach((mask, k) => expect(Buffer.from(mask.data).equals(Buffer.from(b[k].data))).toBe(true))
  })
})

describe('mask mapping to original resolution', () => {
  it('preserves tight-box IoU >= 0.98 against analytic scaling', () => {
    const image = diskImage(256, 192, 120, 90, 45)
    const cfg = withDefaults({ samImageSize: [96, 128], gridStride: 8, minRegionPx: 16 })
    // segment at reduced resolution, as the pipeline does
    const masks = gridFloodSegment(resizeBilinear(image, 128, 96), cfg)
    expect(masks.length).toBeGreaterThan(0)
    for (const mask of masks) {
      const mapped = mapMask(mask, 256, 192)
      const small = tightBox(mask)!
      const big = tightBox(mapped)
      if (!big) continue
      const scaled = {
        x0: (small.x0 * 256) / 128,
        y0: (small.y0 * 192) / 96,
        x1: (small.x1 * 256) / 128,
        y1: (small.y1 * 192) / 96,
      }
      expect(boxIou(big, scaled)).toBeGreaterThanOrEqual(0.98)
    }
  })

  it('round-trips mask files through PNG', () => {
    const dir = tmpDir('mask-')
    writeDiskScene(dir, 's', 128, 96, 60, 48, 25)
    const out = path.join(dir, 'out')
    extractProposals(
      [{ id: 's', path: path.join(dir, 's.png') }],
      withDefaults({ samImageSize: [96, 128], gridStride: 16, minRegionPx: 16 }),
      out,
    )
    const table = readProposalTable(path.join(out, 'proposals.json'))
    for (const p of table.proposals) {
      const mask = readMaskPng(path.join(out, p.mask_file!))
      const tight = tightBox(mask)!
      expect(tight).toEqual(p.box)
    }
    expect(fs.readdirSync(path.join(out, 'masks')).length).toBe(table.proposals.length)
  })
})
