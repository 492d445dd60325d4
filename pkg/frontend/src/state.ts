// Explorer state: everything the strategist can steer, serializable so a
// saved session re-renders identically against recorded responses.

import { N_NPI, PrescribeRequest, SweepResponse } from './types.js'

export interface ExplorerState {
  region: string | null
  weights: number[] // one cost weight per NPI index, >= 0
  eps: number | null // null: sweep a grid instead of a single value
  epsGrid: number
  horizon: number
  seed: number
  randomScenarios: number
  logJ0: boolean
  lastSweep: SweepResponse | null
  selectedPointId: string | null
}

export function defaultState(): ExplorerState {
  return {
    region: null,
    weights: new Array(N_NPI).fill(1),
    eps: null,
    epsGrid: 25,
    horizon: 30,
    seed: 0,
    randomScenarios: 10,
    logJ0: false,
    lastSweep: null,
    selectedPointId: null,
  }
}

export function validateState(s: ExplorerState): void {
  if (s.weights.length !== N_NPI) {
    throw new Error(`weights must have ${N_NPI} entries`)
  }
  if (s.weights.some((w) => !Number.isFinite(w) || w < 0)) {
    throw new Error('weights must be non-negative')
  }
  if (s.eps !== null && (s.eps < 0 || s.eps > 1)) {
    throw new Error('eps must lie in [0, 1]')
  }
  if (s.horizon < 1) {
    throw new Error('horizon must be at least one day')
  }
  if (s.epsGrid < 1) {
    throw new Error('eps grid must have at least one value')
  }
}

export function toPrescribeRequest(s: ExplorerState): PrescribeRequest {
  if (s.region === null) {
    throw new Error('no region selected')
  }
  validateState(s)
  const req: PrescribeRequest = {
    region: s.region,
    weights: [...s.weights],
    horizon: s.horizon,
    random_scenarios: s.randomScenarios,
    seed: s.seed,
  }
  if (s.eps !== null) {
    req.eps = s.eps
  } else {
    req.eps_grid = s.epsGrid
  }
  return req
}

export function serializeState(s: ExplorerState): string {
  return JSON.stringify(s)
}

export function deserializeState(text: string): ExplorerState {
  const s = { ...defaultState(), ...JSON.parse(text) } as ExplorerState
  validateState(s)
  return s
}
