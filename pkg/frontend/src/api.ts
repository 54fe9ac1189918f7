// Typed client for the session service. All numerical work happens
// server-side; this module only moves JSON around.

export interface TaskSpec {
  kind: "classification" | "regression";
  n_classes?: number;
  support_per_class?: number;
  eval_per_class?: number;
  support_size?: number;
  eval_size?: number;
  label_budget?: number;
  feature_dim?: number;
  [key: string]: unknown;
}

export interface ItemView {
  id: number;
  features: unknown;
}

export interface SessionDoc {
  session_id: string;
  t: number;
  budget: number;
  task: TaskSpec;
  support: ItemView[];
  eval_items: ItemView[];
}

export interface QueryDoc {
  status: "pending" | "budget_exhausted";
  item_id?: number;
  t: number;
  budget: number;
}

export interface LabelDoc {
  t: number;
  budget: number;
  item_id: number;
}

export interface PredictionsDoc {
  status: "ok" | "no_evidence";
  t: number;
  slow?: number[][];
  fast?: Record<string, number[]>;
  metric?: number;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Api {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async call<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, init);
    const body = await res.json().catch(() => ({}));
    if (!res.ok) {
      const detail =
        typeof body?.detail === "string" ? body.detail : `HTTP ${res.status}`;
      throw new ApiError(res.status, detail);
    }
    return body as T;
  }

  createSession(
    task: TaskSpec,
    seed: number,
    humanOracle: boolean,
  ): Promise<SessionDoc> {
    return this.call("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task, seed, human_oracle: humanOracle }),
    });
  }

  nextQuery(sessionId: string): Promise<QueryDoc> {
    return this.call(`/sessions/${sessionId}/query`);
  }

  submitLabel(sessionId: string, label: number): Promise<LabelDoc> {
    return this.call(`/sessions/${sessionId}/label`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ label }),
    });
  }

  predictions(sessionId: string): Promise<PredictionsDoc> {
    return this.call(`/sessions/${sessionId}/predictions`);
  }

  async deleteSession(sessionId: string): Promise<void> {
    await this.call(`/sessions/${sessionId}`, { method: "DELETE" });
  }
}
