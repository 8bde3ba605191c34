/** Extractor configuration and model-identifier registry. */

export interface ExtractorConfig {
  /** [height, width] the test image is resized to before mask generation. */
  samImageSize: [number, number]
  /** Square side fed to the embedder; larger crops are resized down to it. */
  cropInputSize: number
  /** Zero pixels outside the mask before embedding. */
  backgroundRemoval: boolean
  /** Mask-generator identifier (see segment.ts registry). */
  segmenter: string
  /** Embedder identifier (see embed.ts registry). */
  embedder: string
  /** Seed-grid stride of the built-in segmenter, in resized-image pixels. */
  gridStride: number
  /** Region-growing tolerance per granularity level (part -> whole object). */
  tolerances: number[]
  /** Regions smaller than this many pixels are discarded. */
  minRegionPx: number
  /** Regions covering more than this fraction of the image are discarded. */
  maxRegionFraction: number
}

export const DEFAULT_CONFIG: ExtractorConfig = {
  samImageSize: [1536, 2048],
  cropInputSize: 448,
  backgroundRemoval: true,
  segmenter: 'grid-flood',
  embedder: 'patchstats',
  gridStride: 32,
  tolerances: [12, 28, 48],
  minRegionPx: 64,
  maxRegionFraction: 0.9,
}

export function withDefaults(partial: Partial<ExtractorConfig>): ExtractorConfig {
  const config = { ...DEFAULT_CONFIG, ...partial }
  const [h, w] = config.samImageSize
  if (h < 1 || w < 1) throw new Error(`bad samImageSize ${h}x${w}`)
  if (config.cropInputSize < 1) throw new Error(`bad cropInputSize ${config.cropInputSize}`)
  if (config.tolerances.length === 0) throw new Error('need at least one tolerance level')
  return config
}
