import { describe, expect, it } from 'vitest';
import { readFileSync } from 'fs';
import { join } from 'path';
import { CsvFormatError, downsample, parseEnergiesCsv, readEnergiesCsv } from '../src/csv.js';

const FIXTURES = join(__dirname, 'fixtures');

describe('parseEnergiesCsv', () => {
  it('parses a real energies file', () => {
    const data = readEnergiesCsv(join(FIXTURES, 'reference_sample.csv'));
    expect(data.modes.map((m) => m.label)).toEqual(
      ['E_1', 'E_2', 'E_3', 'E_4', 'E_5', 'E_6', 'E_7'],
    );
    expect(data.t[0]).toBe(0);
    expect(data.t.length).toBe(data.hOsc.length);
    expect(data.hOsc[0]).toBeCloseTo(4.5978, 3);
    for (const m of data.modes) {
      expect(m.values.length).toBe(data.t.length);
    }
  });

  it('accepts a single data row', () => {
    const data = parseEnergiesCsv('t,E_1,H_osc,H_slow,H_total\n0,1,1,0.5,1.5\n');
    expect(data.t).toEqual([0]);
    expect(data.modes[0].values).toEqual([1]);
  });

  it('rejects empty input', () => {
    expect(() => parseEnergiesCsv('')).toThrow(CsvFormatError);
    expect(() => parseEnergiesCsv('t,E_1,H_osc\n')).toThrow(/no data rows/);
  });

  it('rejects missing columns', () => {
    expect(() => parseEnergiesCsv('t,foo,bar\n0,1,2\n')).toThrow(/expected columns/);
    expect(() => parseEnergiesCsv('E_1,H_osc\n1,2\n')).toThrow(CsvFormatError);
  });

  it('rejects ragged or non-numeric rows', () => {
    expect(() => parseEnergiesCsv('t,E_1,H_osc\n0,1\n')).toThrow(/fields/);
    expect(() => parseEnergiesCsv('t,E_1,H_osc\n0,x,2\n')).toThrow(/non-numeric/);
  });
});

describe('downsample', () => {
  it('keeps short series unchanged', () => {
    expect(downsample([1, 2, 3], 5000)).toEqual([1, 2, 3]);
  });

  it('caps long series by stride selection, keeping the last point', () => {
    const xs = Array.from({ length: 12_001 }, (_, i) => i);
    const out = downsample(xs, 5000);
    expect(out.length).toBeLessThanOrEqual(5001);
    expect(out[0]).toBe(0);
    expect(out[out.length - 1]).toBe(12_000);
    expect(out[1] - out[0]).toBe(3);
  });
});
