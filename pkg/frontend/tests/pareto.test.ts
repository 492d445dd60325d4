// Contract tests for the bi-objective scatter against recorded service
// fixtures: the rendered point set must be exactly the service's.

import { beforeEach, describe, expect, it, vi } from 'vitest'
import { renderPareto } from '../src/pareto.js'
import { SweepPoint, SweepResponse } from '../src/types.js'
import sweepFix from '../fixtures/sweep.json'

const sweep = (sweepFix as { response: SweepResponse }).response

let container: HTMLElement

beforeEach(() => {
  container = document.createElement('div')
  document.body.appendChild(container)
})

describe('pareto scatter', () => {
  it('renders the exact fixture point set', () => {
    renderPareto(container, sweep.points)
    const circles = [...container.querySelectorAll('circle.point')]
    const drawable = sweep.points.filter((p) => p.j0 !== null && p.j1 !== null)
    expect(circles.length).toBe(drawable.length)
    const byId = new Map(circles.map((c) => [c.getAttribute('data-id'), c]))
    for (const p of drawable) {
      const c = byId.get(p.id)
      expect(c, `point ${p.id} missing`).toBeTruthy()
      // rendered values equal fixture values exactly
      expect(Number(c!.getAttribute('data-j0'))).toBe(p.j0)
      expect(Number(c!.getAttribute('data-j1'))).toBe(p.j1)
      expect(c!.getAttribute('data-kind')).toBe(p.kind)
    }
  })

  it('places the eps=1 point on the j1=0 axis', () => {
    const svg = renderPareto(container, sweep.points)!
    const plotBottom = Number(svg.getAttribute('data-plot-bottom'))
    const eps1 = sweep.points.find((p) => p.eps === 1.0)!
    expect(eps1.j1).toBe(0)
    const circle = container.querySelector(`circle[data-id="${eps1.id}"]`)!
    expect(Number(circle.getAttribute('cy'))).toBe(plotBottom)
  })

  it('renders a three-point fixture as three marks', () => {
    const pts: SweepPoint[] = [
      { id: 'a', label: 'a', kind: 'optimal', eps: 0, j0: 0.1, j1: 50, converged: true, dominated: false },
      { id: 'b', label: 'b', kind: 'fixed', eps: null, j0: 0.2, j1: 20, converged: true, dominated: false },
      { id: 'c', label: 'c', kind: 'random', eps: null, j0: 0.3, j1: 80, converged: true, dominated: true },
    ]
    renderPareto(container, pts)
    expect(container.querySelectorAll('circle.point').length).toBe(3)
  })

  it('colors points by kind and highlights the non-dominated set', () => {
    renderPareto(container, sweep.points)
    for (const p of sweep.points) {
      const c = container.querySelector(`circle[data-id="${p.id}"]`)
      if (!c) continue
      expect(c.classList.contains(`kind-${p.kind}`)).toBe(true)
      expect(c.classList.contains('nondominated')).toBe(!p.dominated)
    }
  })

  it('click selects a point', () => {
    const onSelect = vi.fn()
    renderPareto(container, sweep.points, { onSelect })
    const first = sweep.points.filter((p) => p.j0 !== null)[0]
    const circle = container.querySelector(`circle[data-id="${first.id}"]`) as SVGElement
    circle.dispatchEvent(new MouseEvent('click', { bubbles: true }))
    expect(onSelect).toHaveBeenCalledTimes(1)
    expect(onSelect.mock.calls[0][0].id).toBe(first.id)
  })

  it('shows an empty-state message without points', () => {
    renderPareto(container, [])
    expect(container.querySelector('.empty-state')).toBeTruthy()
    expect(container.querySelector('svg')).toBeFalsy()
  })

  it('log toggle moves x positions without touching the data values', () => {
    const svgLin = renderPareto(container, sweep.points, { logJ0: false })!
    const linX = new Map(
      [...svgLin.querySelectorAll('circle.point')].map((c) => [
        c.getAttribute('data-id'),
        c.getAttribute('cx'),
      ]),
    )
    const svgLog = renderPareto(container, sweep.points, { logJ0: true })!
    expect(svgLog.getAttribute('data-log-j0')).toBe('true')
    let moved = 0
    for (const c of svgLog.querySelectorAll('circle.point')) {
      expect(Number(c.getAttribute('data-j0'))).toBe(
        sweep.points.find((p) => p.id === c.getAttribute('data-id'))!.j0,
      )
      if (c.getAttribute('cx') !== linX.get(c.getAttribute('data-id'))) moved += 1
    }
    expect(moved).toBeGreaterThan(0)
  })

  it('marks the selected point', () => {
    const first = sweep.points[0]
    renderPareto(container, sweep.points, { selectedId: first.id })
    const circle = container.querySelector(`circle[data-id="${first.id}"]`)!
    expect(circle.classList.contains('selected')).toBe(true)
  })
})
