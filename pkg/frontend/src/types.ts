// Wire types for the gateway API (docs/api.md in the repo root).

export interface SenseInfo {
  term: string;
  chosen: string;
  rejected: string[];
  scores: Record<string, number>;
}

export interface SubQuery {
  query: string;
  weight: number;
  origin: "original" | "location" | "concept";
}

export interface RankedResult {
  doc_id: string;
  title: string;
  snippet: string;
  backend_score_norm: number;
  context_score: number;
  final_score: number;
  sub_query_ids: number[];
  demoted: boolean;
}

export interface Suggestion {
  concept_id: string;
  label: string;
  score: number;
}

export interface SearchResponse {
  user_id: string;
  query: string;
  plan_id: string;
  sense: SenseInfo | null;
  sub_queries: SubQuery[];
  results: RankedResult[];
  suggestions: Suggestion[];
  warnings: string[];
}

export type FeedbackKind =
  | "result_click"
  | "suggestion_accept"
  | "suggestion_dismiss"
  | "rating";

export interface FeedbackRequest {
  user_id: string;
  kind: FeedbackKind;
  target: string;
  value?: number;
  title?: string;
}

export interface FeedbackResponse {
  user_id: string;
  version: number;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}
