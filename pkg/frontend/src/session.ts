import { execFileSync } from "node:child_process";
import { accessSync, constants, mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { MissingInputError, SessionClosedError, UnknownImageError, coreErrorFor } from "./errors.js";
import {
  DescriptionRecord,
  NegativeRecord,
  ScoresRecord,
  parseLines,
  toLine,
} from "./records.js";

export interface SessionOptions {
  /** Command prefix that reaches the core CLI. */
  core?: string[];
}

const DEFAULT_CORE = ["python3", "-m", "boxprompt"];

function runCore(core: string[], args: string[]): void {
  const [cmd, ...prefix] = core;
  try {
    execFileSync(cmd, [...prefix, ...args], { encoding: "utf-8", stdio: ["ignore", "pipe", "pipe"] });
  } catch (e) {
    const err = e as { status?: number | null; stderr?: string | Buffer; message?: string };
    const diagnostic = (err.stderr ?? err.message ?? "").toString();
    throw coreErrorFor(err.status ?? -1, diagnostic);
  }
}

/** Handle to a loaded (annotations, templates, hierarchy) triple.
 *
 * Each call drives the core CLI over its line-delimited interchange files,
 * so results are byte-identical to batch invocations with the same seed.
 */
export class BoundSession {
  private closed = false;

  constructor(
    readonly annotationPath: string,
    readonly templatePath: string,
    readonly hierarchyPath: string,
    private readonly core: string[] = DEFAULT_CORE,
  ) {
    for (const path of [annotationPath, templatePath, hierarchyPath]) {
      try {
        accessSync(path, constants.R_OK);
      } catch {
        throw new MissingInputError(path);
      }
    }
  }

  get isClosed(): boolean {
    return this.closed;
  }

  /** Idempotent: closing twice is a no-op. */
  close(): void {
    this.closed = true;
  }

  private guard(): void {
    if (this.closed) throw new SessionClosedError();
  }

  private withWorkdir<T>(fn: (dir: string) => T): T {
    const dir = mkdtempSync(join(tmpdir(), "boxprompt-"));
    try {
      return fn(dir);
    } finally {
      rmSync(dir, { recursive: true, force: true });
    }
  }

  /** Render the image-level description for one image at one seed. */
  describeImage(imageId: number, seed: number): { raw: string; record: DescriptionRecord } {
    this.guard();
    return this.withWorkdir((dir) => {
      const out = join(dir, "descriptions.jsonl");
      runCore(this.core, [
        "describe",
        "--annotations", this.annotationPath,
        "--templates", this.templatePath,
        "--out", out,
        "--seed", String(seed),
      ]);
      const lines = parseLines<DescriptionRecord>(readFileSync(out, "utf-8"));
      const hit = lines.find((l) => l.record.image_id === imageId);
      if (!hit) throw new UnknownImageError(imageId);
      return hit;
    });
  }

  /** Synthesize the hard-negative set for one image.
   *
   * Pass the image's score record to enable the failure-driven
   * augmentations, or null for confusion-only negatives.
   */
  hardNegatives(
    imageId: number,
    scores: ScoresRecord | null,
    nH: number,
    seed: number,
  ): Array<{ raw: string; record: NegativeRecord }> {
    this.guard();
    return this.withWorkdir((dir) => {
      const out = join(dir, "negatives.jsonl");
      const args = [
        "negatives",
        "--annotations", this.annotationPath,
        "--templates", this.templatePath,
        "--hierarchy", this.hierarchyPath,
        "--out", out,
        "--seed", String(seed),
        "--n-h", String(nH),
      ];
      if (scores === null) {
        args.push("--no-scores");
      } else {
        const scorePath = join(dir, "scores.jsonl");
        writeFileSync(scorePath, toLine(scores) + "\n", "utf-8");
        args.push("--scores", scorePath);
      }
      runCore(this.core, args);
      const lines = parseLines<NegativeRecord>(readFileSync(out, "utf-8"));
      const hits = lines.filter((l) => l.record.image_id === imageId);
      if (hits.length === 0) throw new UnknownImageError(imageId);
      return hits;
    });
  }
}

export function openSession(
  annotationPath: string,
  templatePath: string,
  hierarchyPath: string,
  options: SessionOptions = {},
): BoundSession {
  return new BoundSession(annotationPath, templatePath, hierarchyPath, options.core);
}
