import { describe, expect, it } from "vitest";

import { ApiError, FoveationApi } from "../src/api.js";
import { ViewerState } from "../src/viewer.js";

const noSleep = () => Promise.resolve();

/** Canned-response server stub covering the job lifecycle. */
function stubServer(opts: { gridN?: number; pendingPolls?: number; failUploads?: number } = {}) {
  const gridN = opts.gridN ?? 3;
  const total = gridN * gridN;
  let polls = 0;
  let uploadAttempts = 0;
  const tileRequests: string[] = [];
  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    if (url.includes("/api/v1/foveate")) {
      uploadAttempts += 1;
      if (opts.failUploads && uploadAttempts <= opts.failUploads) {
        throw new TypeError("network down");
      }
      expect(init?.method).toBe("POST");
      return new Response(
        JSON.stringify({ job_id: "job1", grid_n: gridN, status_url: "/api/v1/jobs/job1" }),
        { status: 202 },
      );
    }
    if (url.endsWith("/api/v1/jobs/job1")) {
      polls += 1;
      const done = polls > (opts.pendingPolls ?? 2);
      return new Response(
        JSON.stringify({
          status: done ? "done" : "pending",
          completed_tiles: done ? total : Math.min(polls, total),
          total_tiles: total,
        }),
        { status: 200 },
      );
    }
    const m = url.match(/\/tile\/(\d+)\/(\d+)$/);
    if (m) {
      tileRequests.push(`${m[1]},${m[2]}`);
      return new Response(new Blob([`png:${m[1]},${m[2]}`]), { status: 200 });
    }
    return new Response("not found", { status: 404 });
  };
  return { fetchImpl, tileRequests, uploads: () => uploadAttempts, polls: () => polls };
}

function makeViewer(server: ReturnType<typeof stubServer>, events = {}, extra = {}) {
  const api = new FoveationApi("", server.fetchImpl);
  return new ViewerState(api, events, {
    gridN: 3,
    sleep: noSleep,
    createObjectUrl: (blob) => `url:${(blob as { size: number }).size}`,
    ...extra,
  });
}

describe("uploadAndTrack", () => {
  it("polls to completion and preloads every tile", async () => {
    const server = stubServer({ gridN: 3, pendingPolls: 3 });
    const progress: Array<[number, number]> = [];
    let ready = false;
    const viewer = makeViewer(server, {
      onProgress: (d: number, t: number) => progress.push([d, t]),
      onReady: () => {
        ready = true;
      },
    });
    await viewer.uploadAndTrack(new Blob(["fake png"]));
    expect(ready).toBe(true);
    expect(viewer.loadedTiles).toBe(9);
    expect(server.tileRequests.length).toBe(9);
    // final progress reaches total/total
    expect(progress.at(-1)).toEqual([9, 9]);
    // every cell became hoverable
    for (let gx = 0; gx < 3; gx++) {
      for (let gy = 0; gy < 3; gy++) {
        expect(viewer.isTileReady({ gx, gy })).toBe(true);
      }
    }
  });

  it("surfaces client errors (413) without retrying", async () => {
    let message = "";
    const fetchImpl = async () => new Response("too large", { status: 413 });
    const api = new FoveationApi("", fetchImpl);
    const viewer = new ViewerState(api, { onError: (m) => (message = m) }, { sleep: noSleep });
    await expect(viewer.uploadAndTrack(new Blob(["x"]))).rejects.toThrow(ApiError);
    expect(message).toMatch(/too large/i);
  });

  it("retries transient network failures with backoff then succeeds", async () => {
    const server = stubServer({ gridN: 3, failUploads: 2 });
    const viewer = makeViewer(server);
    await viewer.uploadAndTrack(new Blob(["x"]));
    expect(server.uploads()).toBe(3);
  });

  it("gives up after max retries and reports failure", async () => {
    let message = "";
    const fetchImpl = async () => {
      throw new TypeError("connection refused");
    };
    const api = new FoveationApi("", fetchImpl);
    const viewer = new ViewerState(
      api,
      { onError: (m) => (message = m) },
      { sleep: noSleep, maxRetries: 3 },
    );
    await expect(viewer.uploadAndTrack(new Blob(["x"]))).rejects.toThrow(/unreachable/);
    expect(message).toMatch(/unreachable/i);
  });

  it("caps concurrent tile fetches", async () => {
    const gridN = 4;
    let inFlight = 0;
    let peak = 0;
    const fetchImpl = async (url: string): Promise<Response> => {
      if (url.includes("foveate")) {
        return new Response(
          JSON.stringify({ job_id: "job1", grid_n: gridN, status_url: "x" }),
          { status: 202 },
        );
      }
      if (url.endsWith("/jobs/job1")) {
        return new Response(
          JSON.stringify({ status: "done", completed_tiles: 16, total_tiles: 16 }),
          { status: 200 },
        );
      }
      inFlight += 1;
      peak = Math.max(peak, inFlight);
      await new Promise((r) => setTimeout(r, 1));
      inFlight -= 1;
      return new Response(new Blob(["t"]), { status: 200 });
    };
    const api = new FoveationApi("", fetchImpl);
    const viewer = new ViewerState(api, {}, {
      gridN,
      sleep: noSleep,
      maxInFlight: 8,
      createObjectUrl: () => "url",
    });
    await viewer.uploadAndTrack(new Blob(["x"]));
    expect(viewer.loadedTiles).toBe(16);
    expect(peak).toBeLessThanOrEqual(8);
  });
});

describe("pointerMoved", () => {
  it("returns the cached tile for the hovered cell and tracks cell changes", async () => {
    const server = stubServer({ gridN: 3, pendingPolls: 0 });
    const shown: string[] = [];
    const viewer = makeViewer(server, {
      onTileShown: (cell: { gx: number; gy: number }) => shown.push(`${cell.gx},${cell.gy}`),
    });
    await viewer.uploadAndTrack(new Blob(["x"]));
    const url = viewer.pointerMoved(10, 10, 300, 300, 3);
    expect(url).not.toBeNull();
    expect(viewer.currentCell).toEqual({ gx: 0, gy: 0 });
    viewer.pointerMoved(299, 150, 300, 300, 3);
    expect(viewer.currentCell).toEqual({ gx: 2, gy: 1 });
    expect(shown).toEqual(["0,0", "2,1"]);
  });

  it("returns null (show original) while the tile is missing", () => {
    const server = stubServer();
    const viewer = makeViewer(server);
    expect(viewer.pointerMoved(5, 5, 300, 300, 3)).toBeNull();
  });
});
