/** Typed client over the review service's HTTP API. Every non-2xx response
 * carries {error, detail, ...extras}; that becomes an ApiError so callers can
 * branch on the error name (VersionConflict, ValidationError, ...). */

import type { RecordDoc } from "./records.js";

export interface ReviewDoc {
  reviewer_id: string;
  verdict: "AcceptUnmodified" | "Modify" | "Discard";
  revision: RecordDoc | null;
  timestamp: string;
}

export interface AdjudicationDoc {
  adjudicator_id: string;
  consistent: boolean;
  final_revision: RecordDoc | null;
  timestamp: string;
}

export interface ItemPayload {
  item_id: string;
  state: string;
  version: number;
  record: RecordDoc;
  reviews: ReviewDoc[];
  hidden_reviews: number;
  adjudication: AdjudicationDoc | null;
  audio_url: string;
  audio_path: string;
}

export interface QueuePayload {
  reviewer: string;
  review: ItemPayload[];
  adjudicate: ItemPayload[];
}

export interface ValidationIssue {
  code: string;
  field: string;
  message: string;
}

export interface ReviewBody {
  reviewer_id: string;
  verdict: string;
  revision: RecordDoc | null;
  expected_version: number;
}

export interface AdjudicationBody {
  adjudicator_id: string;
  consistent: boolean;
  final_revision: RecordDoc | null;
  expected_version: number;
}

export class ApiError extends Error {
  readonly status: number;
  readonly name: string;
  readonly detail: string;
  readonly currentVersion: number | null;
  readonly issues: ValidationIssue[];

  constructor(status: number, body: Record<string, unknown>) {
    const detail = typeof body.detail === "string" ? body.detail : `HTTP ${status}`;
    super(detail);
    this.status = status;
    this.name = typeof body.error === "string" ? body.error : "HttpError";
    this.detail = detail;
    this.currentVersion =
      typeof body.current_version === "number" ? body.current_version : null;
    this.issues = Array.isArray(body.issues)
      ? (body.issues as ValidationIssue[])
      : [];
  }
}

export class ReviewApi {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  audioUrl(item: ItemPayload): string {
    return this.baseUrl + item.audio_url;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      let body: Record<string, unknown> = {};
      try {
        body = (await response.json()) as Record<string, unknown>;
      } catch {
        // non-JSON error body; ApiError falls back to the status code
      }
      throw new ApiError(response.status, body);
    }
    return (await response.json()) as T;
  }

  queue(reviewer: string): Promise<QueuePayload> {
    return this.request(`/api/queue?reviewer=${encodeURIComponent(reviewer)}`);
  }

  item(itemId: string, reviewer?: string): Promise<ItemPayload> {
    const suffix = reviewer ? `?reviewer=${encodeURIComponent(reviewer)}` : "";
    return this.request(`/api/items/${encodeURIComponent(itemId)}${suffix}`);
  }

  submitReview(itemId: string, body: ReviewBody): Promise<ItemPayload> {
    return this.request(`/api/items/${encodeURIComponent(itemId)}/review`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  submitAdjudication(itemId: string, body: AdjudicationBody): Promise<ItemPayload> {
    return this.request(`/api/items/${encodeURIComponent(itemId)}/adjudicate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async exportRetained(): Promise<string> {
    const response = await fetch(`${this.baseUrl}/api/export/retained`);
    if (!response.ok) throw new ApiError(response.status, {});
    return response.text();
  }

  stats(): Promise<Record<string, number>> {
    return this.request("/api/stats");
  }
}
