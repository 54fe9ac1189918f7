// DOM rendering for the labeling loop. Pure render-from-state: every call
// rebuilds the panels from the controller state, no retained widget state.

import { ControllerState, SessionController } from "./state";

export interface UiElements {
  status: HTMLElement;
  budget: HTMLElement;
  query: HTMLElement;
  labelInput: HTMLElement;
  history: HTMLElement;
  predictions: HTMLElement;
  error: HTMLElement;
}

export function render(
  els: UiElements,
  state: ControllerState,
  controller: SessionController,
): void {
  els.error.textContent = state.error ?? "";
  els.error.style.display = state.error ? "block" : "none";

  if (!state.session) {
    els.status.textContent = "no active session";
    els.budget.textContent = "";
    els.query.textContent = "";
    els.labelInput.innerHTML = "";
    els.history.innerHTML = "";
    els.predictions.innerHTML = "";
    return;
  }

  els.budget.textContent = `query ${state.t} / ${state.budget}`;

  if (state.phase === "done") {
    els.status.textContent = "budget exhausted, session complete";
    els.query.textContent = "";
    els.labelInput.innerHTML = "";
  } else if (state.phase === "awaiting_label") {
    els.status.textContent = "the model wants a label for:";
    els.query.textContent = describeItem(state, state.pendingItemId as number);
    renderLabelInput(els.labelInput, state, controller);
  }

  renderHistory(els.history, state);
  renderPredictions(els.predictions, state);
}

function describeItem(state: ControllerState, itemId: number): string {
  const item = state.session?.support.find((it) => it.id === itemId);
  const feat = Array.isArray(item?.features)
    ? ` features=[${(item.features as number[])
        .slice(0, 6)
        .map((v) => (typeof v === "number" ? v.toFixed(3) : String(v)))
        .join(", ")}${(item.features as unknown[]).length > 6 ? ", ..." : ""}]`
    : "";
  return `item #${itemId}${feat}`;
}

function renderLabelInput(
  root: HTMLElement,
  state: ControllerState,
  controller: SessionController,
): void {
  root.innerHTML = "";
  const task = state.session!.task;
  if (task.kind === "classification") {
    const n = task.n_classes ?? 0;
    for (let c = 0; c < n; c++) {
      const btn = document.createElement("button");
      btn.textContent = `class ${c}`;
      btn.dataset.classId = String(c);
      btn.addEventListener("click", () => void controller.submitLabel(c));
      root.appendChild(btn);
    }
  } else {
    const input = document.createElement("input");
    input.type = "number";
    input.min = "0.5";
    input.max = "5";
    input.step = "0.5";
    input.id = "rating-input";
    const btn = document.createElement("button");
    btn.textContent = "submit rating";
    btn.addEventListener("click", () => {
      void controller.submitLabel(Number(input.value));
    });
    root.appendChild(input);
    root.appendChild(btn);
  }
}

function renderHistory(root: HTMLElement, state: ControllerState): void {
  root.innerHTML = "";
  for (const entry of state.history) {
    const li = document.createElement("li");
    const metric = entry.metric === null ? "" : ` (metric ${entry.metric.toFixed(4)})`;
    li.textContent = `item #${entry.itemId} -> ${entry.label}${metric}`;
    root.appendChild(li);
  }
}

function renderPredictions(root: HTMLElement, state: ControllerState): void {
  root.innerHTML = "";
  const preds = state.predictions;
  if (!preds || preds.status !== "ok") {
    root.textContent = "no predictions yet";
    return;
  }
  const metric = document.createElement("div");
  metric.id = "metric";
  metric.textContent =
    preds.metric === undefined ? "" : `held-out metric: ${preds.metric.toFixed(4)}`;
  root.appendChild(metric);

  const list = document.createElement("ol");
  const isCls = state.session!.task.kind === "classification";
  (preds.slow ?? []).forEach((row, i) => {
    const li = document.createElement("li");
    if (isCls) {
      const best = row.indexOf(Math.max(...row));
      li.textContent = `eval item ${i}: class ${best} (p=${row[best].toFixed(3)})`;
    } else {
      li.textContent = `eval item ${i}: rating ${row[0].toFixed(2)}`;
    }
    list.appendChild(li);
  });
  root.appendChild(list);
}
