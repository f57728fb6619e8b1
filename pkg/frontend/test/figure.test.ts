import { describe, expect, it } from 'vitest';
import { join } from 'path';
import { readEnergiesCsv } from '../src/csv.js';
import { layoutPanel, niceTicks, renderFigure } from '../src/figure.js';

const FIXTURES = join(__dirname, 'fixtures');
const sample = () => readEnergiesCsv(join(FIXTURES, 'reference_sample.csv'));

describe('niceTicks', () => {
  it('covers the range at round steps', () => {
    const ticks = niceTicks(0, 10);
    expect(ticks[0]).toBeGreaterThanOrEqual(0);
    expect(ticks[ticks.length - 1]).toBeLessThanOrEqual(10 + 1e-9);
    expect(ticks).toContain(0);
    expect(ticks.length).toBeGreaterThanOrEqual(4);
  });

  it('handles degenerate ranges', () => {
    expect(niceTicks(2.3, 2.3).length).toBeGreaterThan(0);
  });
});

describe('layoutPanel', () => {
  it('selects all eight curves by default', () => {
    const layout = layoutPanel({ data: sample(), shift: 0 });
    expect(layout.series.map((s) => s.label)).toEqual(
      ['E_1', 'E_2', 'E_3', 'E_4', 'E_5', 'E_6', 'E_7', 'H_osc'],
    );
  });

  it('keeps the shifted total inside the panel y-range', () => {
    const layout = layoutPanel({ data: sample(), shift: 2.3 });
    const total = layout.series.find((s) => s.label.startsWith('H_osc'))!;
    const [lo, hi] = layout.yDomain;
    for (const v of total.values) {
      expect(v).toBeGreaterThanOrEqual(lo);
      expect(v).toBeLessThanOrEqual(hi);
    }
    // the shift convention keeps the total comparable to the mode energies
    expect(Math.max(...total.values)).toBeLessThan(3);
  });

  it('honours explicit series selection and ranges', () => {
    const layout = layoutPanel({
      data: sample(), shift: 0, series: ['E_4', 'H_osc'], yRange: [0, 9],
    });
    expect(layout.series.length).toBe(2);
    expect(layout.yDomain).toEqual([0, 9]);
  });

  it('rejects unknown series', () => {
    expect(() => layoutPanel({ data: sample(), shift: 0, series: ['E_99'] }))
      .toThrow(/E_99/);
  });
});

describe('renderFigure', () => {
  it('emits an svg with one polyline per curve and a legend', () => {
    const svg = renderFigure([{ data: sample(), shift: 2.3 }]);
    expect(svg).toContain('<svg');
    expect((svg.match(/<polyline/g) ?? []).length).toBe(8);
    expect(svg).toContain('H_osc - 2.3');
    expect(svg).toContain('E_7');
  });

  it('stacks one panel per input', () => {
    const panels = ['sweep_eps0.02.csv', 'sweep_eps0.01.csv', 'sweep_eps0.005.csv']
      .map((f) => ({ data: readEnergiesCsv(join(FIXTURES, f)), shift: 0 }));
    const svg = renderFigure(panels);
    expect((svg.match(/<polyline/g) ?? []).length).toBe(24);
    expect((svg.match(/<g transform=/g) ?? []).length).toBe(3);
  });

  it('renders a single-row csv as a point marker, not an error', () => {
    const data = {
      t: [0], hOsc: [1.0],
      modes: [{ label: 'E_1', values: [0.5] }],
    };
    const svg = renderFigure([{ data, shift: 0 }]);
    expect(svg).toContain('<circle');
  });

  it('is byte-identical across repeated renders', () => {
    const a = renderFigure([{ data: sample(), shift: 2.3 }]);
    const b = renderFigure([{ data: sample(), shift: 2.3 }]);
    expect(a).toBe(b);
  });
});
