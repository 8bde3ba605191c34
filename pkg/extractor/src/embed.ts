/** Crop embedding backends, pluggable by identifier.
 *
 * `patchstats` is the built-in deterministic embedder: it pools the crop to
 * a fixed grid and concatenates per-cell color statistics with coarse
 * gradient summaries (dim 832). The two self-supervised ViT presets are
 * registered as identifiers so a deployment can drop in real weights; they
 * refuse to run without them.
 */

import type { RgbaImage } from './image.js'
import { resizeBilinear } from './image.js'

export interface Embedder {
  dim: number
  embed(crop: RgbaImage): Float32Array
}

const GRID = 16

class PatchStatsEmbedder implements Embedder {
  readonly dim = GRID * GRID * 3 + GRID * 2 * 2

  embed(crop: RgbaImage): Float32Array {
    const pooled = resizeBilinear(crop, GRID, GRID)
    const out = new Float32Array(this.dim)
    let k = 0
    for (let i = 0; i < GRID * GRID; i++) {
      out[k++] = pooled.data[i * 4] / 255
      out[k++] = pooled.data[i * 4 + 1] / 255
      out[k++] = pooled.data[i * 4 + 2] / 255
    }
    // row/column luminance profiles and their gradients
    const luma = new Float32Array(GRID * GRID)
    for (let i = 0; i < GRID * GRID; i++) {
      luma[i] =
        (0.299 * pooled.data[i * 4] + 0.587 * pooled.data[i * 4 + 1] + 0.114 * pooled.data[i * 4 + 2]) /
        255
    }
    for (let y = 0; y < GRID; y++) {
      let sum = 0
      for (let x = 0; x < GRID; x++) sum += luma[y * GRID + x]
      out[k++] = sum / GRID
      out[k++] = luma[y * GRID + GRID - 1] - luma[y * GRID]
    }
    for (let x = 0; x < GRID; x++) {
      let sum = 0
      for (let y = 0; y < GRID; y++) sum += luma[y * GRID + x]
      out[k++] = sum / GRID
      out[k++] = luma[(GRID - 1) * GRID + x] - luma[x]
    }
    return out
  }
}

class UnavailablePreset implements Embedder {
  readonly dim: number
  private readonly name: string

  constructor(name: string, dim: number) {
    this.name = name
    this.dim = dim
  }

  embed(): Float32Array {
    throw new Error(
      `embedder preset '${this.name}' needs model weights that are not bundled; ` +
        `export the model and register it, or use the built-in 'patchstats'`,
    )
  }
}

const EMBEDDERS: Record<string, () => Embedder> = {
  patchstats: () => new PatchStatsEmbedder(),
  'dino-vits16': () => new UnavailablePreset('dino-vits16', 384),
  'dinov2-vitl14': () => new UnavailablePreset('dinov2-vitl14', 1024),
}

export function getEmbedder(identifier: string): Embedder {
  const factory = EMBEDDERS[identifier]
  if (!factory) {
    throw new Error(
      `unknown embedder '${identifier}' (available: ${Object.keys(EMBEDDERS).join(', ')})`,
    )
  }
  return factory()
}

export function registerEmbedder(identifier: string, factory: () => Embedder): void {
  EMBEDDERS[identifier] = factory
}
