#!/usr/bin/env node
// plot_energies: render figures from oscisep energies CSV files.
//
//   plot_energies --csv energies.csv --out figure.svg --shift 2.3
//   plot_energies --csv a.csv --csv b.csv --csv c.csv --out panels.svg
//
// Exit codes: 0 ok, 1 bad arguments or malformed input.

import { writeFileSync } from 'fs';
import { pathToFileURL } from 'url';
import { CsvFormatError, readEnergiesCsv } from './csv.js';
import { PanelSpec, renderFigure } from './figure.js';

interface Args {
  csvs: string[];
  out?: string;
  shift: number;
  series?: string[];
  ymin?: number;
  ymax?: number;
}

export function parseArgs(argv: string[]): Args {
  const args: Args = { csvs: [], shift: 0 };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      i++;
      if (i >= argv.length) throw new Error(`missing value for ${a}`);
      return argv[i];
    };
    switch (a) {
      case '--csv':
        args.csvs.push(next());
        break;
      case '--panels': {
        // convenience: space for one-flag multi-panel invocations
        while (i + 1 < argv.length && !argv[i + 1].startsWith('--')) {
          args.csvs.push(argv[++i]);
        }
        break;
      }
      case '--out':
        args.out = next();
        break;
      case '--shift':
        args.shift = Number(next());
        break;
      case '--series':
        args.series = next().split(',').map((s) => s.trim()).filter(Boolean);
        break;
      case '--ymin':
        args.ymin = Number(next());
        break;
      case '--ymax':
        args.ymax = Number(next());
        break;
      case '--help':
      case '-h':
        args.csvs.length = 0;
        return args;
      default:
        throw new Error(`unknown argument ${a}`);
    }
  }
  if (!Number.isFinite(args.shift)) {
    throw new Error('--shift must be finite');
  }
  return args;
}

const USAGE =
  'usage: plot_energies --csv PATH [--csv PATH ...] --out PATH ' +
  '[--shift X] [--series E_1,E_2,H_osc] [--ymin A --ymax B]';

export function run(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(USAGE);
    return 1;
  }
  if (args.csvs.length === 0 || !args.out) {
    console.error(USAGE);
    return 1;
  }
  try {
    const panels: PanelSpec[] = args.csvs.map((path) => ({
      data: readEnergiesCsv(path),
      shift: args.shift,
      series: args.series,
      yRange: args.ymin !== undefined && args.ymax !== undefined
        ? [args.ymin, args.ymax] : undefined,
      title: args.csvs.length > 1 ? path : undefined,
    }));
    const svg = renderFigure(panels);
    writeFileSync(args.out, svg, 'utf8');
    console.log(`wrote ${args.out} (${panels.length} panel${panels.length > 1 ? 's' : ''})`);
    return 0;
  } catch (err) {
    if (err instanceof CsvFormatError || err instanceof Error) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

const invokedDirectly = (() => {
  if (!process.argv[1]) return false;
  try {
    return import.meta.url === pathToFileURL(process.argv[1]).href;
  } catch {
    return false;
  }
})();
if (invokedDirectly) {
  process.exit(run(process.argv.slice(2)));
}
