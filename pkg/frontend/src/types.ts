// Shapes of the service API payloads consumed by the explorer.

export interface RegionInfo {
  region_id: string
  training_window: [string, string]
  population: number
  flags: { degenerate_map: boolean; low_confidence: boolean }
}

export interface SweepPoint {
  id: string
  label: string
  kind: 'optimal' | 'fixed' | 'random'
  eps: number | null
  j0: number | null
  j1: number | null
  converged: boolean
  dominated: boolean
}

export interface SweepResponse {
  key: string
  points: SweepPoint[]
  chosen_id: string | null
  horizon: number
}

export interface JobPending {
  job_id: string
  status: string
}

export interface ScheduleResponse {
  id: string
  label: string
  schedule: number[][]
  schedule_continuous: number[][]
}

export interface ForecastResponse {
  region: string
  dates: string[]
  mean: number[]
  lo: number[]
  hi: number[]
}

export interface PrescribeRequest {
  region: string
  weights?: number[]
  eps?: number
  eps_grid?: number
  horizon: number
  random_scenarios?: number
  seed?: number
}

export const NPI_CODES = [
  'C1', 'C2', 'C3', 'C4', 'C5', 'C6', 'C7', 'C8', 'H1', 'H2', 'H3', 'H6',
] as const

// Per-index stringency bounds, mirroring the service's admissible box.
export const NPI_MAX = [3, 3, 2, 4, 2, 3, 2, 4, 2, 3, 2, 4] as const

export const N_NPI = 12
