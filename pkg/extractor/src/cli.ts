#!/usr/bin/env node
/** `extract proposals|features`: the extraction front end.
 *
 * Outputs are exclusively in the consumer toolkit's neutral formats:
 * annotation-schema proposal tables with mask files, and IDFV feature
 * files. Exit codes: 0 success, 1 runtime failure, 2 usage error.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'
import { DEFAULT_CONFIG, withDefaults, type ExtractorConfig } from './config.js'
import { writeFeatureFile } from './featurefile.js'
import { embedProfiles, embedProposalCrops, extractProposals, type ImageInput } from './pipeline.js'

interface Args {
  positional: string[]
  flags: Map<string, string | boolean>
}

function parseArgs(argv: string[]): Args {
  const positional: string[] = []
  const flags = new Map<string, string | boolean>()
  for (let i = 0; i < argv.length; i++) {
    const token = argv[i]
    if (token.startsWith('--')) {
      const name = token.slice(2)
      const next = argv[i + 1]
      if (next !== undefined && !next.startsWith('--')) {
        flags.set(name, next)
        i++
      } else {
        flags.set(name, true)
      }
    } else {
      positional.push(token)
    }
  }
  return { positional, flags }
}

function configFromFlags(flags: Map<string, string | boolean>): ExtractorConfig {
  const partial: Partial<ExtractorConfig> = {}
  const samSize = flags.get('sam-size')
  if (typeof samSize === 'string') {
    const [h, w] = samSize.split(',').map(Number)
    if (!Number.isFinite(h) || !Number.isFinite(w)) throw new UsageError(`bad --sam-size ${samSize}`)
    partial.samImageSize = [h, w]
  }
  const cropSize = flags.get('crop-size')
  if (typeof cropSize === 'string') partial.cropInputSize = Number(cropSize)
  const removal = flags.get('background-removal')
  if (typeof removal === 'string') partial.backgroundRemoval = removal !== 'off'
  const stride = flags.get('grid-stride')
  if (typeof stride === 'string') partial.gridStride = Number(stride)
  const minRegion = flags.get('min-region-px')
  if (typeof minRegion === 'string') partial.minRegionPx = Number(minRegion)
  const segmenter = flags.get('segmenter')
  if (typeof segmenter === 'string') partial.segmenter = segmenter
  const embedder = flags.get('embedder')
  if (typeof embedder === 'string') partial.embedder = embedder
  return withDefaults(partial)
}

class UsageError extends Error {}

function requireFlag(flags: Map<string, string | boolean>, name: string): string {
  const value = flags.get(name)
  if (typeof value !== 'string') throw new UsageError(`missing --${name}`)
  return value
}

function collectImages(target: string): ImageInput[] {
  const stat = fs.statSync(target)
  if (stat.isFile()) {
    return [{ id: path.parse(target).name, path: target }]
  }
  return fs
    .readdirSync(target)
    .filter((f) => f.toLowerCase().endsWith('.png'))
    .sort()
    .map((f) => ({ id: path.parse(f).name, path: path.join(target, f) }))
}

function cmdProposals(args: Args): number {
  const config = configFromFlags(args.flags)
  const images = collectImages(requireFlag(args.flags, 'images'))
  if (images.length === 0) throw new UsageError('no input images')
  const outDir = requireFlag(args.flags, 'out')
  const { table, proposals } = extractProposals(images, config, outDir)
  if (proposals === 0) console.warn('warning: empty proposal set')
  console.log(`wrote ${proposals} proposals for ${images.length} image(s) to ${table}`)
  return 0
}

function cmdFeatures(args: Args): number {
  const config = configFromFlags(args.flags)
  const out = requireFlag(args.flags, 'out')
  const profiles = args.flags.get('profiles')
  let entries
  if (typeof profiles === 'string') {
    entries = embedProfiles(profiles, config)
  } else {
    const table = requireFlag(args.flags, 'proposals')
    const imagesRoot = requireFlag(args.flags, 'images-root')
    entries = embedProposalCrops(table, imagesRoot, config)
  }
  writeFeatureFile(out, entries)
  console.log(`wrote ${entries.length} feature vectors (dim ${entries[0].values.length}) to ${out}`)
  return 0
}

const USAGE = `usage:
  extract proposals --images <file-or-dir> --out <dir>
      [--sam-size H,W] [--grid-stride N] [--min-region-px N] [--segmenter id]
  extract features --proposals <table.json> --images-root <dir> --out <file.idfv>
      [--crop-size N] [--background-removal on|off] [--embedder id]
  extract features --profiles <objects-root> --out <file.idfv> [...]

defaults: sam-size ${DEFAULT_CONFIG.samImageSize.join(',')}, crop-size ${DEFAULT_CONFIG.cropInputSize}, background removal on`

export function main(argv: string[]): number {
  const args = parseArgs(argv)
  const command = args.positional[0]
  try {
    if (command === 'proposals') return cmdProposals(args)
    if (command === 'features') return cmdFeatures(args)
    console.error(USAGE)
    return 2
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}\n${USAGE}`)
      return 2
    }
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

if (process.argv[1] && import.meta.url.endsWith(path.basename(process.argv[1]))) {
  process.exit(main(process.argv.slice(2)))
}
