/** Line-delimited record shapes shared with the core CLI. */

export interface SpanRecord {
  start: number;
  end: number;
  category_id: number;
  objects: number[];
}

export interface DescriptionRecord {
  image_id: number;
  template_id: string;
  /** Derived per-image render seed; a full 64-bit value, so JSON.parse may
   * round it. Read it from the raw line if the exact value matters. */
  seed: number;
  text: string;
  spans: SpanRecord[];
}

export interface NegativeRecord {
  image_id: number;
  kind: "remove_fn" | "insert_fp" | "confuse_category";
  text: string;
}

export interface PredictionRecord {
  bbox: [number, number, number, number];
  assigned_label: number;
  matched_object: number | null;
  scores: number[];
}

export interface ScoresRecord {
  image_id: number;
  predictions: PredictionRecord[];
}

/** Parse one record per non-empty line, preserving the raw line for
 * byte-level comparisons. */
export function parseLines<T>(payload: string): Array<{ raw: string; record: T }> {
  const out: Array<{ raw: string; record: T }> = [];
  for (const raw of payload.split("\n")) {
    if (raw.length === 0) continue;
    out.push({ raw, record: JSON.parse(raw) as T });
  }
  return out;
}

export function toLine(record: unknown): string {
  return JSON.stringify(record);
}
