import { readFileSync } from 'fs';

export interface EnergiesData {
  /** sample times */
  t: number[];
  /** one series per oscillator, labelled E_1..E_n */
  modes: { label: string; values: number[] }[];
  hOsc: number[];
}

export class CsvFormatError extends Error {}

/** Parse an energies CSV (columns t, E_1..E_n, H_osc, ...). */
export function parseEnergiesCsv(text: string, path = '<input>'): EnergiesData {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new CsvFormatError(`${path}: empty file`);
  }
  const header = lines[0].split(',').map((h) => h.trim());
  const tIdx = header.indexOf('t');
  const hIdx = header.indexOf('H_osc');
  const modeIdx: { label: string; idx: number }[] = [];
  for (let j = 0; j < header.length; j++) {
    if (/^E_\d+$/.test(header[j])) {
      modeIdx.push({ label: header[j], idx: j });
    }
  }
  if (tIdx < 0 || hIdx < 0 || modeIdx.length === 0) {
    throw new CsvFormatError(
      `${path}: expected columns t, E_1..E_n, H_osc (got: ${header.join(', ')})`,
    );
  }
  if (lines.length < 2) {
    throw new CsvFormatError(`${path}: no data rows`);
  }
  const t: number[] = [];
  const hOsc: number[] = [];
  const modes = modeIdx.map((m) => ({ label: m.label, values: [] as number[] }));
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(',');
    if (parts.length !== header.length) {
      throw new CsvFormatError(`${path}: row ${i + 1} has ${parts.length} fields`);
    }
    const tv = Number(parts[tIdx]);
    const hv = Number(parts[hIdx]);
    if (!Number.isFinite(tv) || !Number.isFinite(hv)) {
      throw new CsvFormatError(`${path}: non-numeric value in row ${i + 1}`);
    }
    t.push(tv);
    hOsc.push(hv);
    for (let m = 0; m < modeIdx.length; m++) {
      const v = Number(parts[modeIdx[m].idx]);
      if (!Number.isFinite(v)) {
        throw new CsvFormatError(`${path}: non-numeric value in row ${i + 1}`);
      }
      modes[m].values.push(v);
    }
  }
  return { t, modes, hOsc };
}

export function readEnergiesCsv(path: string): EnergiesData {
  let text: string;
  try {
    text = readFileSync(path, 'utf8');
  } catch (err) {
    throw new CsvFormatError(`${path}: ${(err as Error).message}`);
  }
  return parseEnergiesCsv(text, path);
}

/** Stride-downsample to at most maxPoints entries (first point kept). */
export function downsample<T>(values: T[], maxPoints: number): T[] {
  if (values.length <= maxPoints) {
    return values;
  }
  const stride = Math.ceil(values.length / maxPoints);
  const out: T[] = [];
  for (let i = 0; i < values.length; i += stride) {
    out.push(values[i]);
  }
  if (out[out.length - 1] !== values[values.length - 1]) {
    out.push(values[values.length - 1]);
  }
  return out;
}
