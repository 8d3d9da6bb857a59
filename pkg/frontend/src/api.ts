/**
 * Typed client for the audit HTTP API.
 *
 * The UI performs no scoring and holds no authoritative state: every verdict
 * and lease lives on the server, and these calls are the only way the client
 * touches it. Endpoints:
 *
 *   GET  /audit/tasks/next?annotator=<id>
 *   POST /audit/tasks/<task_id>/verdict
 *   GET  /audit/agreement
 *   GET  /audit/strata
 */

export interface TaskView {
  task_id: string;
  item_id: string;
  stratum_key: string;
  question: string;
  answer: string;
  passage: string;
  spans: [number, number][];
  lease_expires_at: number;
  server_time: number;
}

export interface VerdictAck {
  task_id: string;
  annotator_id: string;
  label: string;
  replaced_prior: boolean;
  done: boolean;
  server_time: number;
}

export interface AgreementPair {
  annotators: [string, string];
  kappa: number | null;
  n_tasks: number;
}

export interface StratumAgreement {
  stratum_key: string;
  pairs: AgreementPair[];
  label_counts: Record<string, number>;
  mean_kappa: number | null;
}

export interface AgreementReport {
  strata: StratumAgreement[];
  server_time: number;
}

export interface StrataSummary {
  strata: Record<string, { tasks: number; done: number; verdicts: number }>;
  server_time: number;
}

export class ServiceUnreachable extends Error {
  constructor(cause: unknown) {
    super(`audit service unreachable: ${String(cause)}`);
    this.name = "ServiceUnreachable";
  }
}

export class NoTasksAvailable extends Error {
  constructor() {
    super("no open audit tasks available");
    this.name = "NoTasksAvailable";
  }
}

export class LeaseExpired extends Error {
  constructor(taskId: string) {
    super(`lease expired for task ${taskId}`);
    this.name = "LeaseExpired";
  }
}

export class ValidationError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "ValidationError";
  }
}

async function parseBody(response: Response): Promise<Record<string, unknown>> {
  try {
    return (await response.json()) as Record<string, unknown>;
  } catch {
    return {};
  }
}

export class AuditApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    try {
      return await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ServiceUnreachable(err);
    }
  }

  async fetchNextTask(annotatorId: string): Promise<TaskView> {
    const response = await this.request(
      `/audit/tasks/next?annotator=${encodeURIComponent(annotatorId)}`,
    );
    if (response.status === 404) {
      throw new NoTasksAvailable();
    }
    if (!response.ok) {
      const body = await parseBody(response);
      throw new ValidationError(`lease failed: ${String(body.error ?? response.status)}`);
    }
    return (await response.json()) as TaskView;
  }

  async submitVerdict(
    taskId: string,
    annotatorId: string,
    label: string,
    note?: string,
  ): Promise<VerdictAck> {
    const response = await this.request(`/audit/tasks/${encodeURIComponent(taskId)}/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ annotator_id: annotatorId, label, note: note ?? null }),
    });
    if (response.status === 409) {
      throw new LeaseExpired(taskId);
    }
    if (!response.ok) {
      const body = await parseBody(response);
      throw new ValidationError(`verdict rejected: ${String(body.error ?? response.status)}`);
    }
    return (await response.json()) as VerdictAck;
  }

  async fetchAgreement(): Promise<AgreementReport> {
    const response = await this.request("/audit/agreement");
    if (!response.ok) {
      throw new ServiceUnreachable(`status ${response.status}`);
    }
    return (await response.json()) as AgreementReport;
  }

  async fetchStrata(): Promise<StrataSummary> {
    const response = await this.request("/audit/strata");
    if (!response.ok) {
      throw new ServiceUnreachable(`status ${response.status}`);
    }
    return (await response.json()) as StrataSummary;
  }
}
