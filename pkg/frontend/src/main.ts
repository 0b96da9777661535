/** Bootstraps the demo page against the service that serves it. */

import { ApiClient, isErrorBody } from "./api.js";
import {
  renderClassification,
  renderErrorBanner,
  renderTaggedSpans,
} from "./render.js";
import { DemoState, Sample, loadSamples } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  // served from the API's /demo path by default; same origin
  const client = new ApiClient("");
  const resultBox = el<HTMLDivElement>("result");
  const historyList = el<HTMLUListElement>("history");
  const modelSelect = el<HTMLSelectElement>("model");
  const sampleSelect = el<HTMLSelectElement>("samples");
  const input = el<HTMLTextAreaElement>("input");
  const submit = el<HTMLButtonElement>("submit");

  let state: DemoState;
  try {
    const health = await client.health();
    state = new DemoState(client, health.models);
  } catch (err) {
    resultBox.replaceChildren(
      renderErrorBanner(
        { error: { code: "unreachable", message: `API not reachable: ${err}` } },
        document,
      ),
    );
    return;
  }

  for (const name of Object.keys(state.models).sort()) {
    const option = document.createElement("option");
    option.value = name;
    option.textContent = `${name} (${state.models[name]})`;
    modelSelect.appendChild(option);
  }
  modelSelect.value = state.selectedModel;
  modelSelect.addEventListener("change", () => {
    state.selectedModel = modelSelect.value;
  });

  const samples: Sample[] = await loadSamples((u) => fetch(u));
  if (samples.length === 0) {
    sampleSelect.hidden = true;
  } else {
    for (const [i, sample] of samples.entries()) {
      const option = document.createElement("option");
      option.value = String(i);
      option.textContent = sample.title;
      sampleSelect.appendChild(option);
    }
    sampleSelect.addEventListener("change", () => {
      const sample = samples[Number(sampleSelect.value)];
      if (!sample) return;
      input.value = sample.text;
      if (state.kindOf(sample.model)) {
        state.selectedModel = sample.model;
        modelSelect.value = sample.model;
      }
    });
  }

  function renderHistory(): void {
    historyList.replaceChildren(
      ...state.history.map((entry) => {
        const item = document.createElement("li");
        item.textContent = `[${entry.model}] ${entry.input}`;
        return item;
      }),
    );
  }

  submit.addEventListener("click", async () => {
    if (state.inFlight) return;
    submit.disabled = true;
    try {
      await state.submitText(input.value);
      const last = state.lastResponse;
      if (last === null) return;
      if (isErrorBody(last)) {
        resultBox.replaceChildren(renderErrorBanner(last, document));
      } else if ("tokens" in last) {
        resultBox.replaceChildren(renderTaggedSpans(last, document));
      } else {
        resultBox.replaceChildren(renderClassification(last, document));
      }
      renderHistory();
    } finally {
      submit.disabled = false;
    }
  });
}

boot();
