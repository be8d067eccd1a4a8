/** Thin client for the grid-foveation HTTP API. */

export interface JobDescriptor {
  job_id: string;
  grid_n: number;
  status_url: string;
}

export interface JobStatus {
  status: "pending" | "done" | "error";
  completed_tiles: number;
  total_tiles: number;
  error?: string | null;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class FoveationApi {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async upload(file: Blob, backend = "fgn", gridN = 12): Promise<JobDescriptor> {
    const form = new FormData();
    form.append("image", file, "upload.png");
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/v1/foveate?backend=${backend}&grid_n=${gridN}`,
      { method: "POST", body: form },
    );
    if (resp.status !== 202) {
      const detail = await resp.text();
      throw new ApiError(resp.status, friendlyUploadError(resp.status, detail));
    }
    return (await resp.json()) as JobDescriptor;
  }

  async status(jobId: string): Promise<JobStatus> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/jobs/${jobId}`);
    if (!resp.ok) {
      throw new ApiError(resp.status, `status request failed (${resp.status})`);
    }
    return (await resp.json()) as JobStatus;
  }

  tileUrl(jobId: string, gx: number, gy: number): string {
    return `${this.baseUrl}/api/v1/jobs/${jobId}/tile/${gx}/${gy}`;
  }

  async fetchTile(jobId: string, gx: number, gy: number): Promise<Blob> {
    const resp = await this.fetchImpl(this.tileUrl(jobId, gx, gy));
    if (!resp.ok) {
      throw new ApiError(resp.status, `tile (${gx}, ${gy}) failed (${resp.status})`);
    }
    return await resp.blob();
  }
}

export function friendlyUploadError(status: number, detail: string): string {
  switch (status) {
    case 413:
      return "Image is too large for the server (16 MB / 2048 px limits).";
    case 415:
      return "That file is not a decodable PNG image.";
    case 422:
      return `The server rejected the request parameters: ${detail}`;
    default:
      return `Upload failed with status ${status}.`;
  }
}
