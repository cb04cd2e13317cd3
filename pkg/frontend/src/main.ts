/**
 * DOM bootstrap: wires the session controller to the single-column page.
 * All state decisions live in SessionController; this file only renders.
 */

import { ApiClient } from "./api.js";
import { SessionController, SessionView } from "./session.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "";

const storage = {
  get: (key: string) => window.localStorage.getItem(key),
  set: (key: string, value: string) => window.localStorage.setItem(key, value),
  remove: (key: string) => window.localStorage.removeItem(key),
};

const api = new ApiClient(apiBase);
const controller = new SessionController(api, storage);

const el = (id: string) => document.getElementById(id) as HTMLElement;

function text(id: string, value: string): void {
  el(id).textContent = value;
}

function show(id: string, visible: boolean): void {
  el(id).classList.toggle("hidden", !visible);
}

function renderRatings(view: SessionView): void {
  const container = el("ratings");
  container.innerHTML = "";
  if (!view.current) return;
  for (const dim of view.current.dimensions) {
    const row = document.createElement("label");
    row.className = "rating-row";
    const name = document.createElement("span");
    name.textContent = dim.replace(/_/g, " ");
    const input = document.createElement("input");
    input.type = "range";
    input.min = "1";
    input.max = "5";
    input.step = "1";
    input.value = "3";
    input.dataset.dimension = dim;
    const value = document.createElement("output");
    value.textContent = "3";
    input.addEventListener("input", () => (value.textContent = input.value));
    row.append(name, input, value);
    container.append(row);
  }
}

function collectRatings(): Record<string, number> | undefined {
  const toggle = el("rate-toggle") as HTMLInputElement;
  if (!toggle.checked) return undefined;
  const ratings: Record<string, number> = {};
  document
    .querySelectorAll<HTMLInputElement>("#ratings input[type=range]")
    .forEach((input) => {
      ratings[input.dataset.dimension as string] = Number(input.value);
    });
  return ratings;
}

function render(view: SessionView): void {
  show("start-screen", view.phase === "idle");
  show("item-screen", view.phase === "active");
  show("done-screen", view.phase === "complete");
  show("banner", view.banner !== null);
  if (view.banner) text("banner-text", view.banner);
  text("inline-error", view.inlineError ?? "");
  show("inline-error", view.inlineError !== null);

  if (view.phase === "active" && view.current) {
    text("progress", `${view.progress.answered} / ${view.progress.total}`);
    text("prompt", view.current.prompt);
    text("left-text", view.current.left);
    text("right-text", view.current.right);
    (el("submit-left") as HTMLButtonElement).disabled = view.submitting;
    (el("submit-right") as HTMLButtonElement).disabled = view.submitting;
    if (!el("ratings").hasChildNodes()) renderRatings(view);
  }
  if (view.phase === "complete" && view.summary) {
    text(
      "summary",
      `You answered ${view.summary.answered} items: ` +
        `${view.summary.leftChosen} left, ${view.summary.rightChosen} right. Shukriya!`,
    );
  }
}

async function choose(side: "left" | "right"): Promise<void> {
  const view = await controller.submitAndAdvance(side, collectRatings());
  el("ratings").innerHTML = "";
  render(view);
}

function bind(): void {
  el("start-button").addEventListener("click", async () => {
    const label = (el("evaluator") as HTMLInputElement).value;
    render(await controller.startSession(label));
  });
  el("submit-left").addEventListener("click", () => void choose("left"));
  el("submit-right").addEventListener("click", () => void choose("right"));
  el("banner-retry").addEventListener("click", async () => {
    render(await controller.retry());
  });
  document.addEventListener("keydown", (event) => {
    const active = !el("item-screen").classList.contains("hidden");
    if (!active) return;
    if (event.key === "ArrowLeft") void choose("left");
    if (event.key === "ArrowRight") void choose("right");
  });
}

async function boot(): Promise<void> {
  bind();
  const resumed = await controller.resume();
  render(resumed ?? controller.view());
}

void boot();
