// Bi-objective scatter: intervention cost J1 against human cost J0.
// Red: optimal points from the eps sweep; black: the continue-current-
// policy scenario; blue: random scenarios. Non-dominated points get a
// highlight ring; clicking a point selects it.

import { SweepPoint } from './types.js'

const SVG_NS = 'http://www.w3.org/2000/svg'

export interface ParetoOptions {
  width?: number
  height?: number
  logJ0?: boolean
  selectedId?: string | null
  onSelect?: (point: SweepPoint) => void
}

const MARGIN = { top: 12, right: 16, bottom: 34, left: 58 }

function el(tag: string, attrs: Record<string, string | number>): SVGElement {
  const node = document.createElementNS(SVG_NS, tag)
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, String(v))
  }
  return node
}

export function renderPareto(
  container: HTMLElement,
  points: SweepPoint[],
  opts: ParetoOptions = {},
): SVGSVGElement | null {
  container.textContent = ''
  const drawable = points.filter((p) => p.j0 !== null && p.j1 !== null)
  if (drawable.length === 0) {
    const msg = document.createElement('div')
    msg.className = 'empty-state'
    msg.textContent = 'No sweep results yet - pick a region and run a sweep.'
    container.appendChild(msg)
    return null
  }

  const width = opts.width ?? 460
  const height = opts.height ?? 340
  const x0 = MARGIN.left
  const x1 = width - MARGIN.right
  const y0 = height - MARGIN.bottom // j1 = 0 baseline
  const y1 = MARGIN.top

  const j0s = drawable.map((p) => p.j0 as number)
  const j1s = drawable.map((p) => p.j1 as number)
  const j1Max = Math.max(...j1s, 1e-12)

  let xOf: (v: number) => number
  if (opts.logJ0) {
    const positives = j0s.filter((v) => v > 0)
    const lo = Math.log10(Math.min(...positives, 1e-12) * 0.8)
    const hi = Math.log10(Math.max(...positives, 1e-12) * 1.2)
    xOf = (v) => x0 + ((Math.log10(Math.max(v, 1e-300)) - lo) / Math.max(hi - lo, 1e-9)) * (x1 - x0)
  } else {
    const hi = Math.max(...j0s, 1e-12) * 1.05
    xOf = (v) => x0 + (v / hi) * (x1 - x0)
  }
  const yOf = (v: number) => y0 - (v / (j1Max * 1.05)) * (y0 - y1)

  const svg = el('svg', {
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    'data-plot-bottom': y0,
    'data-log-j0': String(Boolean(opts.logJ0)),
  }) as SVGSVGElement
  svg.setAttribute('class', 'pareto')

  svg.appendChild(el('line', { x1: x0, y1: y0, x2: x1, y2: y0, class: 'axis' }))
  svg.appendChild(el('line', { x1: x0, y1: y0, x2: x0, y2: y1, class: 'axis' }))
  const xLabel = el('text', { x: (x0 + x1) / 2, y: height - 6, class: 'axis-label' })
  xLabel.textContent = opts.logJ0 ? 'J0: infections over horizon (log)' : 'J0: infections over horizon'
  svg.appendChild(xLabel)
  const yLabel = el('text', {
    x: 14,
    y: (y0 + y1) / 2,
    class: 'axis-label',
    transform: `rotate(-90 14 ${(y0 + y1) / 2})`,
  })
  yLabel.textContent = 'J1: weighted stringency-days'
  svg.appendChild(yLabel)

  for (const p of drawable) {
    const cx = xOf(p.j0 as number)
    const cy = yOf(p.j1 as number)
    const classes = ['point', `kind-${p.kind}`]
    if (!p.dominated) classes.push('nondominated')
    if (!p.converged) classes.push('nonconverged')
    if (opts.selectedId === p.id) classes.push('selected')
    const circle = el('circle', {
      cx,
      cy,
      r: p.kind === 'optimal' ? 5 : 4,
      class: classes.join(' '),
      'data-id': p.id,
      'data-kind': p.kind,
      'data-j0': String(p.j0),
      'data-j1': String(p.j1),
      'data-eps': p.eps === null ? '' : String(p.eps),
    })
    const title = el('title', {})
    title.textContent = `${p.label}: J0=${p.j0}, J1=${p.j1}`
    circle.appendChild(title)
    if (opts.onSelect) {
      circle.addEventListener('click', () => opts.onSelect!(p))
    }
    svg.appendChild(circle)
  }
  container.appendChild(svg)
  return svg
}
