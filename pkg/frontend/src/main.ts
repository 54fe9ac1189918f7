import { Api } from "./api";
import { SessionController } from "./state";
import { render, UiElements } from "./ui";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function main(): void {
  const api = new Api("");
  const controller = new SessionController(api);
  const els: UiElements = {
    status: el("status"),
    budget: el("budget"),
    query: el("query"),
    labelInput: el("label-input"),
    history: el("history"),
    predictions: el("predictions"),
    error: el("error"),
  };
  controller.subscribe((state) => render(els, state, controller));

  el("start-classification").addEventListener("click", () => {
    const seed = Number((el("seed") as HTMLInputElement).value || "0");
    void controller.start(
      {
        kind: "classification",
        n_classes: 5,
        support_per_class: 2,
        eval_per_class: 1,
        label_budget: 5,
        feature_dim: 16,
      },
      seed,
      true,
    );
  });
  el("start-regression").addEventListener("click", () => {
    const seed = Number((el("seed") as HTMLInputElement).value || "0");
    void controller.start(
      {
        kind: "regression",
        support_size: 30,
        eval_size: 10,
        label_budget: 5,
      },
      seed,
      true,
    );
  });
  el("end-session").addEventListener("click", () => void controller.end());

  render(els, controller.getState(), controller);
}

main();
