/**
 * Demo session state: model selection, submission with an in-flight
 * guard, append-only history, and sample loading.
 */

import {
  ApiClient,
  ApiError,
  ApiErrorBody,
  ClassifyResponse,
  FetchLike,
  ModelKind,
  TagResponse,
} from "./api.js";

export type DemoResponse = TagResponse | ClassifyResponse;

export interface HistoryEntry {
  input: string;
  model: string;
  response: DemoResponse;
}

export interface Sample {
  title: string;
  text: string;
  model: string;
}

export class DemoState {
  selectedModel = "";
  inputText = "";
  lastResponse: DemoResponse | ApiErrorBody | null = null;
  readonly history: HistoryEntry[] = [];
  inFlight = false;

  constructor(
    private readonly client: ApiClient,
    readonly models: Record<string, ModelKind>,
  ) {
    const names = Object.keys(models).sort();
    if (names.length > 0) {
      this.selectedModel = names[0];
    }
  }

  kindOf(model: string): ModelKind | undefined {
    return this.models[model];
  }

  /**
   * Send the text to the selected model's endpoint.
   *
   * Returns null without calling the service when a request is already in
   * flight (double-submit guard).  On an API error the envelope lands in
   * lastResponse for the banner; history stays unchanged.
   */
  async submitText(text: string): Promise<DemoResponse | null> {
    if (this.inFlight) {
      return null;
    }
    const model = this.selectedModel;
    const kind = this.kindOf(model);
    if (!kind) {
      this.lastResponse = {
        error: { code: "no_model", message: "select a model first" },
      };
      return null;
    }
    this.inFlight = true;
    this.inputText = text;
    try {
      const response =
        kind === "tagger"
          ? await this.client.tag(model, text)
          : await this.client.classify(model, text);
      this.lastResponse = response;
      this.history.push({ input: text, model, response });
      return response;
    } catch (err) {
      if (err instanceof ApiError) {
        this.lastResponse = err.body;
      } else {
        this.lastResponse = {
          error: { code: "network", message: String(err) },
        };
      }
      return null;
    } finally {
      this.inFlight = false;
    }
  }
}

/** Fetch the bundled sample inputs; a missing or empty file yields []. */
export async function loadSamples(
  fetchFn: FetchLike,
  url = "samples.json",
): Promise<Sample[]> {
  try {
    const response = await fetchFn(url);
    if (!response.ok) {
      return [];
    }
    const body = await response.json();
    if (!Array.isArray(body)) {
      return [];
    }
    return body.filter(
      (s): s is Sample =>
        typeof s === "object" &&
        s !== null &&
        typeof s.title === "string" &&
        typeof s.text === "string" &&
        typeof s.model === "string",
    );
  } catch {
    return [];
  }
}
