/**
 * Single-page review client.
 *
 * One annotator per tab: lease a task, read the question/answer against the
 * passage with its support spans highlighted, pick a failure-mode label
 * (buttons or keys 1..5), submit, move on. A dashboard view renders the
 * per-stratum agreement report. All state lives on the server; reloading the
 * page never loses a submitted verdict.
 */

import {
  AuditApi,
  LeaseExpired,
  NoTasksAvailable,
  ServiceUnreachable,
  TaskView,
} from "./api.js";
import { formatCountdown, remainingSeconds } from "./countdown.js";
import { splitSpans } from "./highlight.js";
import { LABEL_DESCRIPTIONS, VERDICT_LABELS, VerdictLabel, labelForKey } from "./labels.js";

export interface AppOptions {
  annotatorId: string;
  /** Injectable for tests; defaults to wall-clock. */
  now?: () => number;
}

interface LoadedTask {
  task: TaskView;
  fetchedAtLocal: number;
}

export class ReviewApp {
  private current: LoadedTask | null = null;
  private selected: VerdictLabel | null = null;
  private view: "task" | "dashboard" = "task";
  private countdownTimer: ReturnType<typeof setInterval> | null = null;
  private readonly now: () => number;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: AuditApi,
    private readonly options: AppOptions,
  ) {
    this.now = options.now ?? (() => Date.now() / 1000);
  }

  /** Lease and render the next task; renders a banner state on failure. */
  async loadNext(): Promise<void> {
    this.selected = null;
    try {
      const task = await this.api.fetchNextTask(this.options.annotatorId);
      this.current = { task, fetchedAtLocal: this.now() };
      this.renderTask();
    } catch (err) {
      this.current = null;
      if (err instanceof NoTasksAvailable) {
        this.renderBanner("empty", "No tasks available. The queue is drained.");
      } else if (err instanceof ServiceUnreachable) {
        this.renderBanner("offline", "Audit service unreachable.", true);
      } else {
        this.renderBanner("error", String(err), true);
      }
    }
  }

  selectLabel(label: VerdictLabel): void {
    this.selected = label;
    for (const button of this.root.querySelectorAll<HTMLButtonElement>("button[data-label]")) {
      button.classList.toggle("selected", button.dataset.label === label);
    }
    const submit = this.root.querySelector<HTMLButtonElement>("#submit-verdict");
    if (submit) submit.disabled = false;
  }

  /** Submit the selected verdict; on lease expiry inform and refetch. */
  async submit(): Promise<void> {
    if (!this.current || !this.selected) {
      return; // client-side block: no label selected yet
    }
    const note = this.root.querySelector<HTMLTextAreaElement>("#verdict-note")?.value || undefined;
    const taskId = this.current.task.task_id;
    try {
      await this.api.submitVerdict(taskId, this.options.annotatorId, this.selected, note);
      await this.loadNext();
    } catch (err) {
      if (err instanceof LeaseExpired) {
        this.renderBanner("expired", `Lease expired for ${taskId}; fetching a fresh task.`);
        await this.loadNext();
        this.showNotice(`Your lease on ${taskId} had expired; nothing was recorded.`);
      } else if (err instanceof ServiceUnreachable) {
        this.showNotice("Service unreachable; verdict not recorded. Retry submit.");
      } else {
        this.showNotice(String(err));
      }
    }
  }

  async showDashboard(): Promise<void> {
    this.view = "dashboard";
    try {
      const report = await this.api.fetchAgreement();
      this.renderDashboard(report.strata);
    } catch (err) {
      this.renderBanner("offline", "Audit service unreachable.", true);
    }
  }

  showTaskView(): void {
    this.view = "task";
    if (this.current) {
      this.renderTask();
    } else {
      void this.loadNext();
    }
  }

  handleKey(key: string): void {
    if (this.view !== "task" || !this.current) return;
    const label = labelForKey(key);
    if (label) {
      this.selectLabel(label);
    } else if (key === "Enter" && this.selected) {
      void this.submit();
    }
  }

  // -- rendering ---------------------------------------------------------

  private clear(): HTMLElement {
    if (this.countdownTimer !== null) {
      clearInterval(this.countdownTimer);
      this.countdownTimer = null;
    }
    this.root.textContent = "";
    const container = document.createElement("div");
    container.className = "app-view";
    this.root.appendChild(container);
    return container;
  }

  private renderBanner(kind: string, message: string, retryable = false): void {
    const container = this.clear();
    const banner = document.createElement("div");
    banner.className = `banner banner-${kind}`;
    banner.setAttribute("role", "status");
    banner.textContent = message;
    container.appendChild(banner);
    if (retryable) {
      const retry = document.createElement("button");
      retry.id = "retry";
      retry.textContent = "Retry";
      retry.addEventListener("click", () => void this.loadNext());
      container.appendChild(retry);
    }
  }

  private showNotice(message: string): void {
    let notice = this.root.querySelector<HTMLElement>(".notice");
    if (!notice) {
      notice = document.createElement("div");
      notice.className = "notice";
      notice.setAttribute("role", "alert");
      this.root.querySelector(".app-view")?.prepend(notice);
    }
    notice.textContent = message;
  }

  private renderTask(): void {
    if (!this.current) return;
    const { task } = this.current;
    const container = this.clear();

    const header = document.createElement("header");
    const stratum = document.createElement("span");
    stratum.className = "stratum";
    stratum.textContent = task.stratum_key;
    const countdown = document.createElement("span");
    countdown.className = "countdown";
    countdown.id = "lease-countdown";
    header.append(stratum, countdown);
    container.appendChild(header);

    const updateCountdown = () => {
      if (!this.current) return;
      const elapsed = this.now() - this.current.fetchedAtLocal;
      const left = remainingSeconds(task.lease_expires_at, task.server_time, elapsed);
      countdown.textContent = `lease ${formatCountdown(left)}`;
      countdown.classList.toggle("urgent", left < 120);
    };
    updateCountdown();
    this.countdownTimer = setInterval(updateCountdown, 1000);

    const question = document.createElement("section");
    question.className = "question";
    const qLabel = document.createElement("h2");
    qLabel.textContent = "Question";
    const qBody = document.createElement("p");
    qBody.textContent = task.question;
    question.append(qLabel, qBody);

    const answer = document.createElement("section");
    answer.className = "answer";
    const aLabel = document.createElement("h2");
    aLabel.textContent = "Answer under review";
    const aBody = document.createElement("p");
    aBody.textContent = task.answer;
    answer.append(aLabel, aBody);

    const passage = document.createElement("section");
    passage.className = "passage";
    passage.setAttribute("lang", "sa");
    const pLabel = document.createElement("h2");
    pLabel.textContent = "Source passage";
    const pBody = document.createElement("p");
    pBody.className = "passage-text";
    for (const segment of splitSpans(task.passage, task.spans)) {
      if (segment.highlighted) {
        const mark = document.createElement("mark");
        mark.textContent = segment.text;
        pBody.appendChild(mark);
      } else {
        pBody.appendChild(document.createTextNode(segment.text));
      }
    }
    passage.append(pLabel, pBody);

    const form = document.createElement("section");
    form.className = "verdict-form";
    const buttons = document.createElement("div");
    buttons.className = "labels";
    VERDICT_LABELS.forEach((label, index) => {
      const button = document.createElement("button");
      button.dataset.label = label;
      button.title = LABEL_DESCRIPTIONS[label];
      button.textContent = `${index + 1} · ${label}`;
      button.addEventListener("click", () => this.selectLabel(label));
      buttons.appendChild(button);
    });
    const note = document.createElement("textarea");
    note.id = "verdict-note";
    note.placeholder = "Optional note";
    const submit = document.createElement("button");
    submit.id = "submit-verdict";
    submit.textContent = "Submit verdict";
    submit.disabled = true; // no label selected yet
    submit.addEventListener("click", () => void this.submit());
    form.append(buttons, note, submit);

    container.append(question, answer, passage, form);
  }

  private renderDashboard(strata: import("./api.js").StratumAgreement[]): void {
    const container = this.clear();
    const heading = document.createElement("h2");
    heading.textContent = "Inter-annotator agreement";
    container.appendChild(heading);

    if (strata.length === 0) {
      const empty = document.createElement("p");
      empty.className = "empty-state";
      empty.textContent = "No verdicts recorded yet.";
      container.appendChild(empty);
      return;
    }

    const table = document.createElement("table");
    table.className = "agreement";
    const head = document.createElement("tr");
    for (const title of ["Stratum", "Mean kappa", "Pairs", "Label counts"]) {
      const th = document.createElement("th");
      th.textContent = title;
      head.appendChild(th);
    }
    table.appendChild(head);

    for (const stratum of strata) {
      const row = document.createElement("tr");
      const name = document.createElement("td");
      name.textContent = stratum.stratum_key;
      const kappa = document.createElement("td");
      kappa.className = "kappa";
      if (stratum.mean_kappa === null) {
        kappa.textContent = "insufficient overlap";
        kappa.classList.add("na");
      } else {
        kappa.textContent = stratum.mean_kappa.toFixed(3);
      }
      const pairs = document.createElement("td");
      pairs.textContent = String(stratum.pairs.length);
      const counts = document.createElement("td");
      counts.textContent = Object.entries(stratum.label_counts)
        .map(([label, count]) => `${label}: ${count}`)
        .join(", ");
      row.append(name, kappa, pairs, counts);
      table.appendChild(row);
    }
    container.appendChild(table);
  }
}

/** Wire the app into the page; called from index.html. */
export function mount(root: HTMLElement, baseUrl: string, annotatorId: string): ReviewApp {
  const api = new AuditApi(baseUrl);
  const app = new ReviewApp(root, api, { annotatorId });
  document.addEventListener("keydown", (event) => {
    if ((event.target as HTMLElement | null)?.tagName === "TEXTAREA") return;
    app.handleKey(event.key);
  });
  void app.loadNext();
  return app;
}
