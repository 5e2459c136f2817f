/**
 * One-sentence-at-a-time annotation flow: fetch next task, capture the
 * annotation through the form, submit, advance.  Keyboard: y/n decide
 * the binary question, "/" jumps to the category search, Ctrl+Enter
 * submits.  Server state is authoritative; the only thing persisted
 * locally is the annotator id.
 */

import { ApiClient, ApiError, NextTask } from "./api.js";
import {
  CategoryInfo,
  DIRECTIONS,
  EntryState,
  FormState,
  OntologyConfig,
  Role,
  TIME_TAGS,
  categoriesFor,
  emptyState,
  toPayload,
  validateState,
} from "./schema.js";

const api = new ApiClient();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function option(value: string, text: string): HTMLOptionElement {
  const node = document.createElement("option");
  node.value = value;
  node.textContent = text;
  return node;
}

class AnnotatorApp {
  private ontology!: OntologyConfig;
  private state: FormState = emptyState();
  private task: NextTask | null = null;
  private annotator = "";

  private readonly sentenceBox = el<HTMLElement>("sentence");
  private readonly metaBox = el<HTMLElement>("sentence-meta");
  private readonly foreignBox = el<HTMLInputElement>("foreign");
  private readonly yesBtn = el<HTMLButtonElement>("narrative-yes");
  private readonly noBtn = el<HTMLButtonElement>("narrative-no");
  private readonly narrativePanel = el<HTMLElement>("narrative-panel");
  private readonly timeSel = el<HTMLSelectElement>("inflation-time");
  private readonly directionSel = el<HTMLSelectElement>("inflation-direction");
  private readonly searchBox = el<HTMLInputElement>("category-search");
  private readonly causeList = el<HTMLElement>("cause-list");
  private readonly effectList = el<HTMLElement>("effect-list");
  private readonly entriesBox = el<HTMLElement>("entries");
  private readonly problemsBox = el<HTMLElement>("problems");
  private readonly submitBtn = el<HTMLButtonElement>("submit");
  private readonly progressBar = el<HTMLElement>("progress-bar");
  private readonly progressText = el<HTMLElement>("progress-text");
  private readonly doneBox = el<HTMLElement>("done");
  private readonly formBox = el<HTMLElement>("form");

  async start(): Promise<void> {
    this.annotator = localStorage.getItem("annotator") ?? "";
    while (!this.annotator) {
      this.annotator = (window.prompt("Annotator id:") ?? "").trim();
    }
    localStorage.setItem("annotator", this.annotator);
    el<HTMLElement>("whoami").textContent = this.annotator;

    this.ontology = await api.ontology();
    this.buildStaticControls();
    this.wireEvents();
    await this.advance();
  }

  private buildStaticControls(): void {
    for (const tag of TIME_TAGS) this.timeSel.appendChild(option(tag, tag));
    for (const dir of DIRECTIONS) this.directionSel.appendChild(option(dir, dir));
    this.renderCategoryLists("");
  }

  private renderCategoryLists(filter: string): void {
    const needle = filter.trim().toLowerCase();
    const render = (host: HTMLElement, role: Role, categories: CategoryInfo[]) => {
      host.textContent = "";
      for (const category of categories) {
        const haystack = `${category.label} ${category.name}`.toLowerCase();
        if (needle && !haystack.includes(needle)) continue;
        const btn = document.createElement("button");
        btn.type = "button";
        btn.className = "category";
        btn.textContent = category.label;
        // Hover shows the full definition without spending screen space.
        btn.title = `${category.name}: ${category.description}`;
        btn.dataset.role = role;
        btn.dataset.category = category.label;
        if (this.state.entries.some((e) => e.role === role && e.category === category.label)) {
          btn.classList.add("selected");
        }
        btn.addEventListener("click", () => this.toggleEntry(role, category.label));
        host.appendChild(btn);
      }
    };
    render(this.causeList, "cause", this.ontology.causes);
    render(this.effectList, "effect", this.ontology.effects);
  }

  private wireEvents(): void {
    this.foreignBox.addEventListener("change", () => {
      this.state.foreign = this.foreignBox.checked;
    });
    this.yesBtn.addEventListener("click", () => this.setNarrative(true));
    this.noBtn.addEventListener("click", () => this.setNarrative(false));
    this.timeSel.addEventListener("change", () => {
      this.state.inflationTime = this.timeSel.value as FormState["inflationTime"];
    });
    this.directionSel.addEventListener("change", () => {
      this.state.inflationDirection =
        this.directionSel.value as FormState["inflationDirection"];
    });
    this.searchBox.addEventListener("input", () =>
      this.renderCategoryLists(this.searchBox.value),
    );
    this.searchBox.addEventListener("keydown", (event) => {
      if (event.key === "Enter") {
        event.preventDefault();
        const first = this.causeList.querySelector<HTMLButtonElement>("button")
          ?? this.effectList.querySelector<HTMLButtonElement>("button");
        first?.click();
      }
    });
    this.submitBtn.addEventListener("click", () => void this.submit());

    document.addEventListener("keydown", (event) => {
      if (event.target instanceof HTMLInputElement && event.target !== this.foreignBox) {
        if (!(event.ctrlKey && event.key === "Enter")) return;
      }
      if (event.ctrlKey && event.key === "Enter") {
        event.preventDefault();
        void this.submit();
      } else if (event.key === "y") {
        this.setNarrative(true);
      } else if (event.key === "n") {
        this.setNarrative(false);
      } else if (event.key === "/") {
        event.preventDefault();
        this.searchBox.focus();
      }
    });
  }

  private setNarrative(on: boolean): void {
    this.state.containsNarrative = on;
    this.yesBtn.classList.toggle("active", on);
    this.noBtn.classList.toggle("active", !on);
    this.narrativePanel.classList.toggle("disabled", !on);
    for (const control of this.narrativePanel.querySelectorAll<HTMLElement>(
      "select, input, button",
    )) {
      (control as HTMLInputElement).disabled = !on;
    }
    this.renderProblems([]);
  }

  private toggleEntry(role: Role, category: string): void {
    const index = this.state.entries.findIndex(
      (e) => e.role === role && e.category === category,
    );
    if (index >= 0) {
      this.state.entries.splice(index, 1);
    } else {
      // New entries inherit the sentence-level time tag as their default.
      this.state.entries.push({ role, category, time: this.state.inflationTime });
    }
    this.renderEntries();
    this.renderCategoryLists(this.searchBox.value);
  }

  private renderEntries(): void {
    this.entriesBox.textContent = "";
    this.state.entries.forEach((entry, index) => {
      const row = document.createElement("div");
      row.className = "entry";
      const label = document.createElement("span");
      label.textContent = `${entry.role}: ${entry.category}`;
      row.appendChild(label);

      const timeSel = document.createElement("select");
      for (const tag of TIME_TAGS) timeSel.appendChild(option(tag, tag));
      timeSel.value = entry.time;
      timeSel.addEventListener("change", () => {
        entry.time = timeSel.value as EntryState["time"];
      });
      row.appendChild(timeSel);

      const remove = document.createElement("button");
      remove.type = "button";
      remove.textContent = "remove";
      remove.addEventListener("click", () => {
        this.state.entries.splice(index, 1);
        this.renderEntries();
        this.renderCategoryLists(this.searchBox.value);
      });
      row.appendChild(remove);
      this.entriesBox.appendChild(row);
    });
  }

  private renderProblems(problems: { field: string; message: string }[]): void {
    this.problemsBox.textContent = "";
    for (const problem of problems) {
      const row = document.createElement("div");
      row.className = "problem";
      row.textContent = `${problem.field}: ${problem.message}`;
      this.problemsBox.appendChild(row);
    }
  }

  private async submit(): Promise<void> {
    if (!this.task) return;
    const problems = validateState(this.state, this.ontology);
    if (problems.length > 0) {
      // Blocked client-side: no request leaves the page.
      this.renderProblems(problems);
      return;
    }
    this.submitBtn.disabled = true;
    try {
      await api.submit(
        this.task.sentence.sentence_id,
        this.annotator,
        toPayload(this.state),
      );
      await this.advance();
    } catch (error) {
      // Form state stays intact either way so the annotator can retry.
      if (error instanceof ApiError) {
        this.renderProblems(
          error.diagnostics.length > 0
            ? error.diagnostics.map((d) => ({ field: d.path, message: d.message }))
            : [{ field: "submit", message: error.message }],
        );
      } else {
        this.renderProblems([{ field: "network", message: String(error) }]);
      }
    } finally {
      this.submitBtn.disabled = false;
    }
  }

  private async advance(): Promise<void> {
    this.task = await api.nextTask(this.annotator);
    this.state = emptyState();
    this.foreignBox.checked = false;
    this.searchBox.value = "";
    this.setNarrative(false);
    this.renderEntries();
    this.renderCategoryLists("");
    this.renderProblems([]);

    if (this.task === null) {
      this.formBox.hidden = true;
      this.doneBox.hidden = false;
      await this.refreshProgress(0);
      return;
    }
    this.formBox.hidden = false;
    this.doneBox.hidden = true;
    this.sentenceBox.textContent = this.task.sentence.text;
    this.metaBox.textContent =
      `${this.task.sentence.sentence_id} · ${this.task.sentence.date}` +
      ` · ${this.task.sentence.source}`;
    await this.refreshProgress(this.task.remaining);
  }

  private async refreshProgress(remaining: number): Promise<void> {
    try {
      const progress = await api.progress();
      const total = progress.assigned?.[this.annotator] ?? progress.n_total;
      const done = Math.max(0, total - remaining);
      const percent = total > 0 ? Math.round((100 * done) / total) : 100;
      this.progressBar.style.width = `${percent}%`;
      this.progressText.textContent = `${done} / ${total} (${progress.split} split)`;
    } catch {
      this.progressText.textContent = "progress unavailable";
    }
  }
}

if (typeof document !== "undefined" && document.getElementById("form")) {
  const app = new AnnotatorApp();
  app.start().catch((error) => {
    const box = document.getElementById("problems");
    if (box) box.textContent = `failed to start: ${error}`;
  });
}
