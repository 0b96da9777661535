/**
 * Pure rendering of API responses into DOM nodes.
 *
 * The demo performs no computation on model outputs beyond layout: every
 * label shown is exactly a label received from the service.
 */

import {
  ApiErrorBody,
  ClassifyResponse,
  TagResponse,
} from "./api.js";
import { labelBackground, labelBorder } from "./colors.js";

/** Tagged text as highlighted segments with their type labels. */
export function renderTaggedSpans(response: TagResponse, doc: Document): HTMLElement {
  const container = doc.createElement("div");
  container.className = "tagged-text";

  const spans = [...response.spans].sort((a, b) => a.start - b.start);
  let cursor = 0;

  const emitPlain = (upto: number) => {
    if (cursor >= upto) return;
    const text = response.tokens.slice(cursor, upto).join(" ");
    container.appendChild(doc.createTextNode(cursor === 0 ? `${text} ` : ` ${text} `));
    cursor = upto;
  };

  for (const span of spans) {
    emitPlain(span.start);
    const mark = doc.createElement("mark");
    mark.className = "span";
    mark.dataset.type = span.type;
    mark.style.backgroundColor = labelBackground(span.type);
    mark.style.borderColor = labelBorder(span.type);
    mark.appendChild(
      doc.createTextNode(response.tokens.slice(span.start, span.end + 1).join(" ")),
    );
    const tag = doc.createElement("span");
    tag.className = "tag";
    tag.textContent = span.type;
    mark.appendChild(tag);
    container.appendChild(mark);
    cursor = span.end + 1;
  }
  emitPlain(response.tokens.length);
  return container;
}

/** Class probabilities as a sorted bar list, best first. */
export function renderClassification(
  response: ClassifyResponse,
  doc: Document,
): HTMLElement {
  const container = doc.createElement("div");
  container.className = "classification";

  const best = doc.createElement("div");
  best.className = "best-label";
  best.textContent = response.label;
  best.style.backgroundColor = labelBackground(response.label);
  container.appendChild(best);

  const list = doc.createElement("ul");
  list.className = "scores";
  const ranked = Object.entries(response.scores).sort((a, b) => b[1] - a[1]);
  for (const [label, score] of ranked) {
    const item = doc.createElement("li");
    const name = doc.createElement("span");
    name.className = "score-label";
    name.textContent = label;
    const bar = doc.createElement("span");
    bar.className = "score-bar";
    bar.style.width = `${Math.round(score * 100)}%`;
    bar.style.backgroundColor = labelBackground(label);
    const value = doc.createElement("span");
    value.className = "score-value";
    value.textContent = score.toFixed(4);
    item.append(name, bar, value);
    list.appendChild(item);
  }
  container.appendChild(list);
  return container;
}

/** The API error envelope, verbatim, in a banner. */
export function renderErrorBanner(body: ApiErrorBody, doc: Document): HTMLElement {
  const banner = doc.createElement("div");
  banner.className = "banner error";
  const code = doc.createElement("code");
  code.textContent = body.error.code;
  const message = doc.createElement("span");
  message.textContent = body.error.message;
  banner.append(code, message);
  return banner;
}
