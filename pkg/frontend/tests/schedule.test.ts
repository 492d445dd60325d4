// Contract: the schedule panel must display exactly what the service
// returned, and the forecast band must carry the service numbers.

import { beforeEach, describe, expect, it } from 'vitest'
import { renderForecast, renderScheduleHeatmap } from '../src/schedule.js'
import { ForecastResponse, N_NPI, NPI_MAX, ScheduleResponse } from '../src/types.js'
import schedulesFix from '../fixtures/schedules.json'
import forecastFix from '../fixtures/forecast.json'

const schedules = schedulesFix as Record<string, ScheduleResponse>
const forecast = (forecastFix as { response: ForecastResponse }).response

let container: HTMLElement

beforeEach(() => {
  container = document.createElement('div')
  document.body.appendChild(container)
})

function domMatrix(root: HTMLElement, nDays: number): number[][] {
  const out: number[][] = Array.from({ length: nDays }, () => new Array(N_NPI).fill(NaN))
  for (const cell of root.querySelectorAll<HTMLElement>('.cell')) {
    const d = Number(cell.dataset.day)
    const j = Number(cell.dataset.index)
    out[d][j] = Number(cell.dataset.level)
  }
  return out
}

describe('schedule heatmap', () => {
  it('reproduces every fixture schedule byte-for-byte', () => {
    for (const sched of Object.values(schedules)) {
      renderScheduleHeatmap(container, sched)
      const rendered = domMatrix(container, sched.schedule.length)
      expect(JSON.stringify(rendered)).toBe(JSON.stringify(sched.schedule))
    }
  })

  it('shows an all-dark grid for a max-stringency schedule', () => {
    const sched: ScheduleResponse = {
      id: 'x',
      label: 'max stringency',
      schedule: Array.from({ length: 7 }, () => [...NPI_MAX]),
      schedule_continuous: Array.from({ length: 7 }, () => [...NPI_MAX]),
    }
    renderScheduleHeatmap(container, sched)
    const cells = [...container.querySelectorAll('.cell')]
    expect(cells.length).toBe(7 * N_NPI)
    expect(cells.every((c) => c.classList.contains('max'))).toBe(true)
  })

  it('labels all twelve index rows', () => {
    const sched = Object.values(schedules)[0]
    renderScheduleHeatmap(container, sched)
    expect(container.querySelectorAll('.row-label').length).toBe(N_NPI)
  })
})

describe('forecast band', () => {
  it('carries the service numbers verbatim', () => {
    const svg = renderForecast(container, forecast)
    expect(JSON.parse(svg.getAttribute('data-mean')!)).toEqual(forecast.mean)
    expect(JSON.parse(svg.getAttribute('data-lo')!)).toEqual(forecast.lo)
    expect(JSON.parse(svg.getAttribute('data-hi')!)).toEqual(forecast.hi)
  })

  it('band widens with the horizon on the fixture', () => {
    renderForecast(container, forecast)
    const width = (k: number) => forecast.hi[k] - forecast.lo[k]
    expect(width(forecast.mean.length - 1)).toBeGreaterThan(width(1))
  })

  it('draws a band polygon and a mean line', () => {
    const svg = renderForecast(container, forecast)
    expect(svg.querySelector('polygon.band')).toBeTruthy()
    const line = svg.querySelector('polyline.mean-line')!
    expect(line.getAttribute('points')!.split(' ').length).toBe(forecast.mean.length)
  })
})
