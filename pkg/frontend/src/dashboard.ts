/**
 * Agreement dashboard model. Every number shown comes straight from the
 * stats endpoint; the UI does no statistics of its own (bar heights are a
 * pure presentation scaling of the service-supplied counts).
 */

import { AgreementStats, AnnotationApi, PerKeyStd } from "./api.js";

export interface Bar {
  lo: number;
  hi: number;
  count: number;
  /** 0..100, relative to the tallest bin; purely presentational */
  heightPct: number;
  label: string;
}

export interface DisagreementRow extends PerKeyStd {
  thumbnail_url: string;
}

export type DashboardView =
  | { kind: "loading" }
  | { kind: "empty" }
  | { kind: "ready"; bars: Bar[]; rows: DisagreementRow[]; binWidth: number };

export function barsFromStats(stats: AgreementStats): Bar[] {
  const max = Math.max(...stats.counts, 1);
  return stats.counts.map((count, i) => {
    const lo = stats.edges[i] ?? 0;
    const hi = stats.edges[i + 1] ?? lo;
    const closing = i === stats.counts.length - 1 ? "]" : ")";
    return {
      lo,
      hi,
      count,
      heightPct: (count / max) * 100,
      label: `[${lo.toFixed(2)}, ${hi.toFixed(2)}${closing}`,
    };
  });
}

export function disagreementRows(stats: AgreementStats, limit = 10): DisagreementRow[] {
  return [...stats.per_key]
    .sort((a, b) => b.std_dev - a.std_dev || a.instance_id.localeCompare(b.instance_id))
    .slice(0, limit)
    .map((row) => ({ ...row, thumbnail_url: `/media/crops/${row.instance_id}.png` }));
}

export class AgreementDashboard {
  private current: DashboardView = { kind: "loading" };

  constructor(
    private readonly api: AnnotationApi,
    private readonly onChange: (view: DashboardView) => void = () => {},
  ) {}

  view(): DashboardView {
    return this.current;
  }

  async load(): Promise<void> {
    const stats = await this.api.agreement();
    if (stats.counts.length === 0 || stats.per_key.length === 0) {
      this.current = { kind: "empty" };
    } else {
      this.current = {
        kind: "ready",
        bars: barsFromStats(stats),
        rows: disagreementRows(stats),
        binWidth: stats.bin_width,
      };
    }
    this.onChange(this.current);
  }
}
