// Unit tests for the session state machine against a mocked service.

import { describe, expect, it } from "vitest";
import { Api, ApiError } from "../src/api";
import { isHalfStep, SessionController } from "../src/state";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

interface Route {
  method: string;
  path: RegExp;
  handle: (body: unknown) => [number, unknown];
}

// Minimal scripted service: classification, budget 3, queries items
// 10, 11, 12 in order, stored labels 0, 1, 2.
function fakeService(): { api: Api; calls: string[] } {
  const calls: string[] = [];
  let t = 0;
  let pending: number | null = null;
  const queryOrder = [10, 11, 12];
  const labels: Record<number, number> = { 10: 0, 11: 1, 12: 2 };
  const budget = 3;

  const routes: Route[] = [
    {
      method: "POST",
      path: /^\/sessions$/,
      handle: (body) => {
        const req = body as { task: { n_classes?: number } };
        if ((req.task.n_classes ?? 0) !== 5) return [422, { detail: "bad task" }];
        return [
          200,
          {
            session_id: "s1",
            t: 0,
            budget,
            task: { kind: "classification", n_classes: 5, label_budget: budget },
            support: queryOrder.map((id) => ({ id, features: [0.1, 0.2] })),
            eval_items: [{ id: 99, features: [0.3] }],
          },
        ];
      },
    },
    {
      method: "GET",
      path: /^\/sessions\/s1\/query$/,
      handle: () => {
        if (t >= budget) return [200, { status: "budget_exhausted", t, budget }];
        pending = queryOrder[t];
        return [200, { status: "pending", item_id: pending, t, budget }];
      },
    },
    {
      method: "POST",
      path: /^\/sessions\/s1\/label$/,
      handle: (body) => {
        if (pending === null) return [409, { detail: "no pending query" }];
        const { label } = body as { label: number };
        if (label !== labels[pending]) {
          return [422, { detail: "label disagrees with stored data" }];
        }
        const itemId = pending;
        pending = null;
        t += 1;
        return [200, { t, budget, item_id: itemId }];
      },
    },
    {
      method: "GET",
      path: /^\/sessions\/s1\/predictions$/,
      handle: () => {
        if (t === 0) return [200, { status: "no_evidence", t }];
        return [
          200,
          {
            status: "ok",
            t,
            slow: [[0.2, 0.2, 0.2, 0.2, 0.2]],
            fast: {},
            metric: 0.5 + 0.1 * t,
          },
        ];
      },
    },
    {
      method: "DELETE",
      path: /^\/sessions\/s1$/,
      handle: () => [200, { deleted: "s1" }],
    },
  ];

  const fetchImpl = async (input: string, init?: RequestInit) => {
    const method = init?.method ?? "GET";
    calls.push(`${method} ${input}`);
    const route = routes.find((r) => r.method === method && r.path.test(input));
    if (!route) return jsonResponse(404, { detail: "unknown route" });
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    const [status, payload] = route.handle(body);
    return jsonResponse(status, payload);
  };
  return { api: new Api("", fetchImpl), calls };
}

const TASK = {
  kind: "classification" as const,
  n_classes: 5,
  support_per_class: 2,
  eval_per_class: 1,
  label_budget: 3,
  feature_dim: 16,
};

describe("SessionController", () => {
  it("starts a session and surfaces the first query", async () => {
    const { api } = fakeService();
    const c = new SessionController(api);
    await c.start(TASK, 0, false);
    const s = c.getState();
    expect(s.phase).toBe("awaiting_label");
    expect(s.pendingItemId).toBe(10);
    expect(s.t).toBe(0);
    expect(s.budget).toBe(3);
    expect(s.error).toBeNull();
  });

  it("never exposes hidden labels in the session payload", async () => {
    const { api } = fakeService();
    const c = new SessionController(api);
    await c.start(TASK, 0, false);
    for (const item of c.getState().session!.support) {
      expect(Object.keys(item).sort()).toEqual(["features", "id"]);
    }
  });

  it("steps the full loop, history tracks t, predictions refresh", async () => {
    const { api } = fakeService();
    const c = new SessionController(api);
    await c.start(TASK, 0, false);
    const metrics: number[] = [];
    const answers: Record<number, number> = { 10: 0, 11: 1, 12: 2 };
    while (c.getState().phase === "awaiting_label") {
      const s = c.getState();
      expect(s.history.length).toBe(s.t);
      await c.submitLabel(answers[s.pendingItemId as number]);
      const after = c.getState();
      expect(after.history.length).toBe(after.t);
      metrics.push(after.predictions!.metric as number);
    }
    const end = c.getState();
    expect(end.phase).toBe("done");
    expect(end.t).toBe(3);
    expect(end.history.map((h) => h.itemId)).toEqual([10, 11, 12]);
    expect(metrics).toEqual([0.6, 0.7, 0.8]);
  });

  it("rejects off-grid ratings inline without contacting the server", async () => {
    const { api, calls } = fakeService();
    const c = new SessionController(api);
    await c.start(TASK, 0, false);
    // Pretend this is a ratings session to exercise the client-side check.
    c.getState().session!.task.kind = "regression";
    const callsBefore = calls.length;
    const tBefore = c.getState().t;
    await c.submitLabel(3.3);
    expect(calls.length).toBe(callsBefore);
    expect(c.getState().t).toBe(tBefore);
    expect(c.getState().error).toMatch(/0\.5/);
    expect(c.getState().phase).toBe("awaiting_label");
  });

  it("keeps the query pending when the stored oracle rejects a label", async () => {
    const { api } = fakeService();
    const c = new SessionController(api);
    await c.start(TASK, 0, false);
    await c.submitLabel(4);
    const s = c.getState();
    expect(s.error).toMatch(/disagrees/);
    expect(s.phase).toBe("awaiting_label");
    expect(s.pendingItemId).toBe(10);
    expect(s.history.length).toBe(0);
    await c.submitLabel(0);
    expect(c.getState().t).toBe(1);
    expect(c.getState().error).toBeNull();
  });

  it("refuses to submit without a pending query", async () => {
    const { api } = fakeService();
    const c = new SessionController(api);
    await expect(c.submitLabel(0)).rejects.toThrow(/no query/);
  });

  it("surfaces a service error banner when the service is unreachable", async () => {
    const api = new Api("", async () => {
      throw new Error("connection refused");
    });
    const c = new SessionController(api);
    await c.start(TASK, 0, false);
    expect(c.getState().error).toMatch(/connection refused/);
    expect(c.getState().phase).toBe("idle");
  });

  it("surfaces a 422 from session creation", async () => {
    const { api } = fakeService();
    const c = new SessionController(api);
    await c.start({ ...TASK, n_classes: 7 }, 0, false);
    expect(c.getState().error).toBe("bad task");
  });

  it("ends a session and resets state", async () => {
    const { api, calls } = fakeService();
    const c = new SessionController(api);
    await c.start(TASK, 0, false);
    await c.end();
    expect(c.getState().phase).toBe("idle");
    expect(c.getState().session).toBeNull();
    expect(calls.some((x) => x.startsWith("DELETE "))).toBe(true);
  });

  it("notifies subscribers on every transition", async () => {
    const { api } = fakeService();
    const c = new SessionController(api);
    const phases: string[] = [];
    c.subscribe((s) => phases.push(s.phase));
    await c.start(TASK, 0, false);
    expect(phases[phases.length - 1]).toBe("awaiting_label");
  });
});

describe("Api error mapping", () => {
  it("wraps non-2xx responses in ApiError with the detail string", async () => {
    const api = new Api("", async () =>
      jsonResponse(409, { detail: "no pending query; call /query first" }),
    );
    await expect(api.submitLabel("x", 1)).rejects.toMatchObject({
      status: 409,
      message: "no pending query; call /query first",
    });
    await expect(api.submitLabel("x", 1)).rejects.toBeInstanceOf(ApiError);
  });
});

describe("isHalfStep", () => {
  it("accepts the half-step grid and rejects the rest", () => {
    expect(isHalfStep(3.5)).toBe(true);
    expect(isHalfStep(0.5)).toBe(true);
    expect(isHalfStep(5)).toBe(true);
    expect(isHalfStep(3.3)).toBe(false);
    expect(isHalfStep(3.25)).toBe(false);
    expect(isHalfStep(NaN)).toBe(false);
  });
});
