/** Viewer state machine: upload, poll, preload tiles, hover to foveate. */

import { ApiError, FoveationApi, JobStatus } from "./api.js";
import { Cell, cellKey, pointerToCell, preloadOrder } from "./grid.js";

export interface ViewerEvents {
  onProgress?: (completed: number, total: number) => void;
  onReady?: () => void;
  onError?: (message: string) => void;
  onTileShown?: (cell: Cell) => void;
}

export interface ViewerOptions {
  backend?: string;
  gridN?: number;
  pollIntervalMs?: number;
  maxRetries?: number;
  retryBaseMs?: number;
  maxInFlight?: number;
  sleep?: (ms: number) => Promise<void>;
  createObjectUrl?: (blob: Blob) => string;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class ViewerState {
  jobId: string | null = null;
  gridN = 12;
  currentCell: Cell | null = null;
  readonly tileUrls = new Map<string, string>();
  private loaded = 0;

  constructor(
    private api: FoveationApi,
    private events: ViewerEvents = {},
    private opts: ViewerOptions = {},
  ) {
    if (opts.gridN) this.gridN = opts.gridN;
  }

  get loadedTiles(): number {
    return this.loaded;
  }

  get totalTiles(): number {
    return this.gridN * this.gridN;
  }

  isTileReady(cell: Cell): boolean {
    return this.tileUrls.has(cellKey(cell));
  }

  /** Upload a file, poll until done, then preload every tile. */
  async uploadAndTrack(file: Blob): Promise<void> {
    const retries = this.opts.maxRetries ?? 5;
    const sleep = this.opts.sleep ?? defaultSleep;
    let job;
    let attempt = 0;
    for (;;) {
      try {
        job = await this.api.upload(file, this.opts.backend ?? "fgn", this.gridN);
        break;
      } catch (err) {
        if (err instanceof ApiError) {
          // client errors are final and user-visible
          this.events.onError?.(err.message);
          throw err;
        }
        attempt += 1;
        if (attempt > retries) {
          const msg = "Server unreachable after repeated retries.";
          this.events.onError?.(msg);
          throw new Error(msg);
        }
        await sleep((this.opts.retryBaseMs ?? 250) * 2 ** (attempt - 1));
      }
    }
    this.jobId = job.job_id;
    this.gridN = job.grid_n;
    const status = await this.pollUntilDone();
    if (status.status === "error") {
      const msg = `Foveation failed: ${status.error ?? "unknown error"}`;
      this.events.onError?.(msg);
      throw new Error(msg);
    }
    await this.preloadTiles();
    this.events.onReady?.();
  }

  private async pollUntilDone(): Promise<JobStatus> {
    const sleep = this.opts.sleep ?? defaultSleep;
    for (;;) {
      const status = await this.api.status(this.jobId!);
      this.events.onProgress?.(status.completed_tiles, status.total_tiles);
      if (status.status === "done" || status.status === "error") {
        return status;
      }
      await sleep(this.opts.pollIntervalMs ?? 300);
    }
  }

  /** Fetch all tiles (center-out) with a bounded number in flight. */
  private async preloadTiles(): Promise<void> {
    const order = preloadOrder(this.gridN);
    const maxInFlight = this.opts.maxInFlight ?? 8;
    const toUrl = this.opts.createObjectUrl ?? ((b: Blob) => URL.createObjectURL(b));
    let next = 0;
    const worker = async () => {
      while (next < order.length) {
        const cell = order[next++];
        const blob = await this.api.fetchTile(this.jobId!, cell.gx, cell.gy);
        this.tileUrls.set(cellKey(cell), toUrl(blob));
        this.loaded += 1;
        this.events.onProgress?.(this.loaded, this.totalTiles);
      }
    };
    await Promise.all(
      Array.from({ length: Math.min(maxInFlight, order.length) }, () => worker()),
    );
  }

  /**
   * Route a pointer position (image-element coordinates) to a tile.
   * Returns the object URL to display, or null while that tile still
   * loads (callers keep showing the original image then).
   */
  pointerMoved(x: number, y: number, viewW: number, viewH: number): string | null {
    const cell = pointerToCell(x, y, viewW, viewH, this.gridN);
    if (
      this.currentCell &&
      this.currentCell.gx === cell.gx &&
      this.currentCell.gy === cell.gy
    ) {
      return this.tileUrls.get(cellKey(cell)) ?? null;
    }
    this.currentCell = cell;
    const url = this.tileUrls.get(cellKey(cell));
    if (url) {
      this.events.onTileShown?.(cell);
      return url;
    }
    return null;
  }
}
