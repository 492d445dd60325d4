// Service client. Sweep requests are debounced and superseded by newer
// ones: sliders fire rapidly, only the latest request may update the UI,
// and stale responses are discarded by request id.

import {
  ForecastResponse,
  JobPending,
  PrescribeRequest,
  RegionInfo,
  ScheduleResponse,
  SweepResponse,
} from './types.js'

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

export class ServiceError extends Error {
  constructor(public status: number, message: string) {
    super(message)
  }
}

export class ServiceClient {
  private seq = 0
  private timer: ReturnType<typeof setTimeout> | null = null
  private pendingResolve: ((v: SweepResponse | null) => void) | null = null

  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...a) => fetch(...a),
    private debounceMs = 400,
    private pollMs = 300,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path)
    if (!resp.ok) {
      throw new ServiceError(resp.status, await resp.text())
    }
    return resp.json() as Promise<T>
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    })
    if (!resp.ok) {
      throw new ServiceError(resp.status, await resp.text())
    }
    return resp.json() as Promise<T>
  }

  regions(): Promise<RegionInfo[]> {
    return this.getJson('/regions')
  }

  forecast(req: { region: string; scenario: object; days: number }): Promise<ForecastResponse> {
    return this.postJson('/forecast', req)
  }

  schedule(pointId: string): Promise<ScheduleResponse> {
    return this.getJson(`/schedule/${pointId}`)
  }

  /**
   * Debounced prescription sweep. Resolves with the sweep result, or null
   * when a newer request superseded this one at any stage (before the
   * debounce fired, while in flight, or while polling a background job).
   */
  prescribeDebounced(req: PrescribeRequest): Promise<SweepResponse | null> {
    this.seq += 1
    const myId = this.seq
    if (this.timer !== null) {
      clearTimeout(this.timer)
      this.timer = null
    }
    if (this.pendingResolve !== null) {
      // release the waiter whose debounce timer we just cancelled
      this.pendingResolve(null)
      this.pendingResolve = null
    }
    return new Promise((resolve, reject) => {
      this.pendingResolve = resolve
      this.timer = setTimeout(async () => {
        if (this.pendingResolve === resolve) {
          this.pendingResolve = null
        }
        if (myId !== this.seq) {
          resolve(null)
          return
        }
        try {
          let body = await this.postJson<SweepResponse | JobPending>('/prescribe', req)
          while ('job_id' in body) {
            if (myId !== this.seq) {
              resolve(null)
              return
            }
            await new Promise((r) => setTimeout(r, this.pollMs))
            const job = await this.getJson<{ status: string; result?: SweepResponse; error?: string }>(
              `/jobs/${body.job_id}`,
            )
            if (job.status === 'done' && job.result) {
              body = job.result
            } else if (job.status === 'error') {
              throw new ServiceError(500, job.error ?? 'sweep failed')
            }
          }
          resolve(myId === this.seq ? (body as SweepResponse) : null)
        } catch (err) {
          reject(err)
        }
      }, this.debounceMs)
    })
  }
}
