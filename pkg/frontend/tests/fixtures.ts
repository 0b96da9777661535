/**
 * Wire-format fixtures mirroring real service responses (captured from the
 * API's golden transcripts), so these tests pin the same contract the
 * server is tested against.
 */

import { ApiErrorBody, ClassifyResponse, TagResponse } from "../src/api.js";

export const TAG_RESPONSE: TagResponse = {
  model: "refparse",
  tokens: [
    "Calzolari,",
    "N.",
    "(1982).",
    "towards",
    "a",
    "lexical",
    "database.",
    "Computational",
    "Linguistics,",
    "45--97.",
  ],
  labels: [
    "author",
    "author",
    "date",
    "title",
    "title",
    "title",
    "title",
    "journal",
    "journal",
    "pages",
  ],
  spans: [
    { type: "author", start: 0, end: 1, charStart: 0, charEnd: 13 },
    { type: "date", start: 2, end: 2, charStart: 14, charEnd: 21 },
    { type: "title", start: 3, end: 6, charStart: 22, charEnd: 49 },
    { type: "journal", start: 7, end: 8, charStart: 50, charEnd: 76 },
    { type: "pages", start: 9, end: 9, charStart: 77, charEnd: 84 },
  ],
};

export const CLASSIFY_RESPONSE: ClassifyResponse = {
  model: "intent",
  label: "background",
  scores: {
    background: 0.3650809514053644,
    method: 0.3173533764173302,
    result: 0.31756567217730547,
  },
};

export const ERROR_BODY: ApiErrorBody = {
  error: { code: "unknown_model", message: "no model named 'nope'" },
};

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
