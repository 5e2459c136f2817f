/** Thin typed client for the annotation service's JSON endpoints. */

import type { OntologyConfig, WireAnnotation } from "./schema.js";

export interface SentenceInfo {
  sentence_id: string;
  doc_id: string;
  ordinal: number;
  date: string;
  source: string;
  text: string;
  word_count: number;
}

export interface NextTask {
  sentence: SentenceInfo;
  remaining: number;
}

export interface Diagnostic {
  kind: string;
  message: string;
  path: string;
}

export interface ProgressInfo {
  split: string;
  n_total: number;
  log_records: number;
  effective_records: number;
  by_annotator: Record<string, number>;
  by_split: Record<string, number>;
  assigned?: Record<string, number>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    readonly diagnostics: Diagnostic[],
  ) {
    super(`${kind} (HTTP ${status})`);
  }
}

async function reject(response: Response): Promise<never> {
  let kind = "request-failed";
  let diagnostics: Diagnostic[] = [];
  try {
    const body = await response.json();
    if (typeof body.error === "string") kind = body.error;
    if (Array.isArray(body.diagnostics)) diagnostics = body.diagnostics;
  } catch {
    // non-JSON error body; keep the generic kind
  }
  throw new ApiError(response.status, kind, diagnostics);
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  async ontology(): Promise<OntologyConfig> {
    const response = await fetch(`${this.base}/api/ontology`);
    if (!response.ok) await reject(response);
    return response.json();
  }

  /** Null when the annotator's queue is exhausted (HTTP 204). */
  async nextTask(annotator: string): Promise<NextTask | null> {
    const response = await fetch(
      `${this.base}/api/tasks/next?annotator=${encodeURIComponent(annotator)}`,
    );
    if (response.status === 204) return null;
    if (!response.ok) await reject(response);
    return response.json();
  }

  async submit(
    sentenceId: string,
    annotator: string,
    annotation: WireAnnotation,
  ): Promise<void> {
    const response = await fetch(`${this.base}/api/annotations`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        sentence_id: sentenceId,
        annotator,
        annotation,
      }),
    });
    if (!response.ok) await reject(response);
    await response.json();
  }

  async progress(): Promise<ProgressInfo> {
    const response = await fetch(`${this.base}/api/progress`);
    if (!response.ok) await reject(response);
    return response.json();
  }
}
