// Session state machine. Holds everything the UI needs to render and
// enforces the query -> label -> predictions cycle; the server remains the
// single source of truth for t, the budget, and all predictions.

import { Api, ApiError, PredictionsDoc, SessionDoc, TaskSpec } from "./api";

export type Phase = "idle" | "awaiting_label" | "done";

export interface HistoryEntry {
  itemId: number;
  label: number;
  metric: number | null;
}

export interface ControllerState {
  phase: Phase;
  session: SessionDoc | null;
  pendingItemId: number | null;
  t: number;
  budget: number;
  history: HistoryEntry[];
  predictions: PredictionsDoc | null;
  error: string | null;
}

export type Listener = (state: ControllerState) => void;

export class SessionController {
  private state: ControllerState = initialState();
  private listeners: Listener[] = [];

  constructor(private api: Api) {}

  getState(): ControllerState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private setState(patch: Partial<ControllerState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  async start(task: TaskSpec, seed: number, humanOracle: boolean): Promise<void> {
    this.setState({ ...initialState() });
    try {
      const session = await this.api.createSession(task, seed, humanOracle);
      this.setState({
        session,
        t: session.t,
        budget: session.budget,
      });
      await this.advance();
    } catch (err) {
      this.fail(err);
    }
  }

  // Ask the server which item it wants labeled next, or finish if the
  // budget is spent.
  private async advance(): Promise<void> {
    const session = this.state.session;
    if (!session) return;
    try {
      const q = await this.api.nextQuery(session.session_id);
      if (q.status === "budget_exhausted" || q.item_id === undefined) {
        this.setState({ phase: "done", pendingItemId: null, t: q.t });
        return;
      }
      this.setState({ phase: "awaiting_label", pendingItemId: q.item_id, t: q.t });
    } catch (err) {
      this.fail(err);
    }
  }

  async submitLabel(label: number): Promise<void> {
    const session = this.state.session;
    if (!session || this.state.phase !== "awaiting_label") {
      throw new Error("no query awaiting a label");
    }
    if (session.task.kind === "regression" && !isHalfStep(label)) {
      this.setState({ error: "ratings must be multiples of 0.5" });
      return;
    }
    const itemId = this.state.pendingItemId as number;
    try {
      const ack = await this.api.submitLabel(session.session_id, label);
      const preds = await this.api.predictions(session.session_id);
      const metric = preds.status === "ok" && preds.metric !== undefined
        ? preds.metric
        : null;
      this.setState({
        t: ack.t,
        pendingItemId: null,
        history: [...this.state.history, { itemId, label, metric }],
        predictions: preds,
        error: null,
      });
      await this.advance();
    } catch (err) {
      this.fail(err);
      if (err instanceof ApiError && err.status === 422) {
        // Wrong label against a stored oracle: the query is still pending,
        // let the user retry.
        this.setState({ phase: "awaiting_label", pendingItemId: itemId });
      }
    }
  }

  async end(): Promise<void> {
    const session = this.state.session;
    if (session) {
      try {
        await this.api.deleteSession(session.session_id);
      } catch {
        // already gone is fine
      }
    }
    this.setState({ ...initialState() });
  }

  private fail(err: unknown): void {
    const msg = err instanceof Error ? err.message : String(err);
    this.setState({ error: msg });
  }
}

export function isHalfStep(x: number): boolean {
  return Number.isFinite(x) && Math.abs(x * 2 - Math.round(x * 2)) < 1e-9;
}

function initialState(): ControllerState {
  return {
    phase: "idle",
    session: null,
    pendingItemId: null,
    t: 0,
    budget: 0,
    history: [],
    predictions: null,
    error: null,
  };
}
