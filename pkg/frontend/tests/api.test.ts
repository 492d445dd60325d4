// Debounce and supersession behaviour of the sweep client: rapid slider
// movement must produce exactly one request, and stale responses must
// never reach the caller.

import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest'
import { ServiceClient } from '../src/api.js'

function jsonResponse(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200,
    headers: { 'Content-Type': 'application/json' },
  })
}

const SWEEP = { key: 'k', points: [], chosen_id: null, horizon: 10 }

beforeEach(() => {
  vi.useFakeTimers()
})

afterEach(() => {
  vi.useRealTimers()
})

describe('prescribeDebounced', () => {
  it('coalesces rapid calls into one request', async () => {
    const fetchImpl = vi.fn(async () => jsonResponse(SWEEP))
    const client = new ServiceClient('http://x', fetchImpl, 400)
    const p1 = client.prescribeDebounced({ region: 'A', horizon: 10 })
    const p2 = client.prescribeDebounced({ region: 'A', horizon: 11 })
    const p3 = client.prescribeDebounced({ region: 'A', horizon: 12 })
    await vi.advanceTimersByTimeAsync(450)
    const [r1, r2, r3] = await Promise.all([p1, p2, p3])
    expect(fetchImpl).toHaveBeenCalledTimes(1)
    const sent = JSON.parse((fetchImpl.mock.calls[0] as any)[1].body)
    expect(sent.horizon).toBe(12)
    expect(r1).toBeNull()
    expect(r2).toBeNull()
    expect(r3).toEqual(SWEEP)
  })

  it('discards a response that lands after a newer request started', async () => {
    let resolveFirst: (r: Response) => void
    const fetchImpl = vi
      .fn()
      .mockImplementationOnce(
        () => new Promise<Response>((res) => (resolveFirst = res)),
      )
      .mockImplementationOnce(async () => jsonResponse({ ...SWEEP, key: 'second' }))
    const client = new ServiceClient('http://x', fetchImpl as any, 100)
    const p1 = client.prescribeDebounced({ region: 'A', horizon: 10 })
    await vi.advanceTimersByTimeAsync(150) // first request in flight
    const p2 = client.prescribeDebounced({ region: 'A', horizon: 20 })
    await vi.advanceTimersByTimeAsync(150) // second fires
    resolveFirst!(jsonResponse({ ...SWEEP, key: 'first' }))
    const [r1, r2] = await Promise.all([p1, p2])
    expect(r1).toBeNull() // stale
    expect((r2 as any).key).toBe('second')
  })

  it('polls background jobs to completion', async () => {
    const fetchImpl = vi
      .fn()
      .mockImplementationOnce(async () => jsonResponse({ job_id: 'j1', status: 'pending' }))
      .mockImplementationOnce(async () => jsonResponse({ status: 'pending' }))
      .mockImplementationOnce(async () => jsonResponse({ status: 'done', result: SWEEP }))
    const client = new ServiceClient('http://x', fetchImpl as any, 50, 50)
    const p = client.prescribeDebounced({ region: 'A', horizon: 99 })
    await vi.advanceTimersByTimeAsync(500)
    expect(await p).toEqual(SWEEP)
    expect(fetchImpl).toHaveBeenCalledTimes(3)
    expect((fetchImpl.mock.calls[1] as any)[0]).toContain('/jobs/j1')
  })

  it('rejects on a service error status', async () => {
    const fetchImpl = vi.fn(async () => new Response('boom', { status: 422 }))
    const client = new ServiceClient('http://x', fetchImpl as any, 10)
    const p = client.prescribeDebounced({ region: 'A', horizon: 10 })
    const check = expect(p).rejects.toThrow()
    await vi.advanceTimersByTimeAsync(50)
    await check
  })
})

describe('plain endpoints', () => {
  it('regions and schedule hit the expected paths', async () => {
    const fetchImpl = vi.fn(async (url: string) =>
      jsonResponse(url.includes('/schedule/') ? { id: 'p', schedule: [] } : []),
    )
    const client = new ServiceClient('http://svc', fetchImpl as any)
    await client.regions()
    await client.schedule('p1')
    expect((fetchImpl.mock.calls[0] as any)[0]).toBe('http://svc/regions')
    expect((fetchImpl.mock.calls[1] as any)[0]).toBe('http://svc/schedule/p1')
  })
})
