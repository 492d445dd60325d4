// Timeline panels for a selected sweep point: a heatmap of the 12
// stringency levels over the horizon, and the forecast line with its
// +-3 sigma band. Every rendered number comes from a service response.

import { ForecastResponse, NPI_CODES, NPI_MAX, ScheduleResponse } from './types.js'

const SVG_NS = 'http://www.w3.org/2000/svg'

export function renderScheduleHeatmap(container: HTMLElement, sched: ScheduleResponse): void {
  container.textContent = ''
  const caption = document.createElement('div')
  caption.className = 'panel-caption'
  caption.textContent = sched.label
  container.appendChild(caption)

  const grid = document.createElement('div')
  grid.className = 'heatmap'
  const nDays = sched.schedule.length
  grid.style.gridTemplateColumns = `max-content repeat(${nDays}, 1fr)`
  for (let j = 0; j < NPI_CODES.length; j++) {
    const label = document.createElement('div')
    label.className = 'row-label'
    label.textContent = NPI_CODES[j]
    grid.appendChild(label)
    for (let d = 0; d < nDays; d++) {
      const level = sched.schedule[d][j]
      const cell = document.createElement('div')
      cell.className = 'cell' + (level >= NPI_MAX[j] ? ' max' : '')
      cell.dataset.day = String(d)
      cell.dataset.index = String(j)
      cell.dataset.level = String(level)
      const shade = NPI_MAX[j] > 0 ? level / NPI_MAX[j] : 0
      cell.style.backgroundColor = `rgba(24, 40, 74, ${(0.08 + 0.92 * shade).toFixed(3)})`
      cell.title = `${NPI_CODES[j]} day ${d}: level ${level}`
      grid.appendChild(cell)
    }
  }
  container.appendChild(grid)
}

export function renderForecast(container: HTMLElement, fc: ForecastResponse): SVGSVGElement {
  container.textContent = ''
  const width = 460
  const height = 220
  const m = { top: 10, right: 12, bottom: 24, left: 64 }
  const n = fc.mean.length
  const lo = Math.min(...fc.lo, 0)
  const hi = Math.max(...fc.hi) * 1.05 || 1
  const xOf = (k: number) => m.left + (k / Math.max(n - 1, 1)) * (width - m.left - m.right)
  const yOf = (v: number) => height - m.bottom - ((v - lo) / (hi - lo)) * (height - m.top - m.bottom)

  const svg = document.createElementNS(SVG_NS, 'svg') as SVGSVGElement
  svg.setAttribute('viewBox', `0 0 ${width} ${height}`)
  svg.setAttribute('width', String(width))
  svg.setAttribute('height', String(height))
  svg.setAttribute('class', 'forecast')
  svg.setAttribute('data-mean', JSON.stringify(fc.mean))
  svg.setAttribute('data-lo', JSON.stringify(fc.lo))
  svg.setAttribute('data-hi', JSON.stringify(fc.hi))

  const band = document.createElementNS(SVG_NS, 'polygon')
  const upper = fc.hi.map((v, k) => `${xOf(k)},${yOf(v)}`)
  const lower = fc.lo.map((v, k) => `${xOf(k)},${yOf(v)}`).reverse()
  band.setAttribute('points', [...upper, ...lower].join(' '))
  band.setAttribute('class', 'band')
  svg.appendChild(band)

  const line = document.createElementNS(SVG_NS, 'polyline')
  line.setAttribute('points', fc.mean.map((v, k) => `${xOf(k)},${yOf(v)}`).join(' '))
  line.setAttribute('class', 'mean-line')
  line.setAttribute('fill', 'none')
  svg.appendChild(line)

  const xAxis = document.createElementNS(SVG_NS, 'line')
  xAxis.setAttribute('x1', String(m.left))
  xAxis.setAttribute('y1', String(yOf(0)))
  xAxis.setAttribute('x2', String(width - m.right))
  xAxis.setAttribute('y2', String(yOf(0)))
  xAxis.setAttribute('class', 'axis')
  svg.appendChild(xAxis)

  const label = document.createElementNS(SVG_NS, 'text')
  label.setAttribute('x', String(m.left))
  label.setAttribute('y', String(height - 6))
  label.setAttribute('class', 'axis-label')
  label.textContent = `daily new cases, ${fc.dates[0]} .. ${fc.dates[fc.dates.length - 1]}`
  svg.appendChild(label)

  container.appendChild(svg)
  return svg
}
