/** Parser for the trial plot-data file (band / daily / weekly rows). */

export interface BandRow {
  t_min: number;
  lo: number;
  median: number;
  hi: number;
}

export interface DailyRow {
  day: number;
  tir: number;
  tar: number;
  tbr: number;
}

export interface WeeklyRow {
  week: number;
  tir: number;
}

export interface PlotData {
  band: BandRow[];
  daily: DailyRow[];
  weekly: WeeklyRow[];
}

export class PlotDataError extends Error {
  constructor(public line: number, message: string) {
    super(`line ${line}: ${message}`);
  }
}

const HEADER =
  "kind,t_min,band_lo,band_median,band_hi,day,tir,tar,tbr,week,week_tir";

function num(cells: string[], idx: number, line: number, name: string): number {
  const value = Number(cells[idx]);
  if (cells[idx] === "" || cells[idx] === undefined || Number.isNaN(value)) {
    throw new PlotDataError(line, `${name} is not a number: ${cells[idx]!}`);
  }
  return value;
}

export function parsePlotData(text: string): PlotData {
  const lines = text.split(/\r?\n/);
  if ((lines[0] ?? "").trim() !== HEADER) {
    throw new PlotDataError(1, `expected header ${HEADER}`);
  }
  const out: PlotData = { band: [], daily: [], weekly: [] };
  for (let i = 1; i < lines.length; i++) {
    const raw = lines[i];
    if (!raw || !raw.trim()) continue;
    const lineNo = i + 1;
    const cells = raw.split(",");
    if (cells.length !== 11) {
      throw new PlotDataError(lineNo, `expected 11 columns, got ${cells.length}`);
    }
    const kind = cells[0];
    if (kind === "band") {
      out.band.push({
        t_min: num(cells, 1, lineNo, "t_min"),
        lo: num(cells, 2, lineNo, "band_lo"),
        median: num(cells, 3, lineNo, "band_median"),
        hi: num(cells, 4, lineNo, "band_hi"),
      });
    } else if (kind === "daily") {
      out.daily.push({
        day: num(cells, 5, lineNo, "day"),
        tir: num(cells, 6, lineNo, "tir"),
        tar: num(cells, 7, lineNo, "tar"),
        tbr: num(cells, 8, lineNo, "tbr"),
      });
    } else if (kind === "weekly") {
      out.weekly.push({
        week: num(cells, 9, lineNo, "week"),
        tir: num(cells, 10, lineNo, "week_tir"),
      });
    } else {
      throw new PlotDataError(lineNo, `unknown row kind ${kind!}`);
    }
  }
  if (!out.band.length) throw new PlotDataError(1, "file has no band rows");
  return out;
}

/** Render-side safety check: the band must never invert. */
export function assertBandOrdered(data: PlotData): void {
  for (const row of data.band) {
    if (row.lo > row.hi) {
      throw new PlotDataError(0, `band inverted at t=${row.t_min}`);
    }
  }
}
