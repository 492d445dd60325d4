// Wires the explorer: region picker, 12 weight sliders, the eps control,
// sweep triggering (debounced through the client), the scatter, and the
// schedule/forecast panels for the selected point.

import { ServiceClient } from './api.js'
import { renderPareto } from './pareto.js'
import { renderForecast, renderScheduleHeatmap } from './schedule.js'
import { ExplorerState, defaultState, toPrescribeRequest } from './state.js'
import { NPI_CODES, SweepPoint } from './types.js'

export class ExplorerApp {
  state: ExplorerState = defaultState()
  private scatterEl!: HTMLElement
  private scheduleEl!: HTMLElement
  private forecastEl!: HTMLElement
  private statusEl!: HTMLElement

  constructor(private root: HTMLElement, private client: ServiceClient) {}

  async start(): Promise<void> {
    this.buildLayout()
    const regions = await this.client.regions()
    const select = this.root.querySelector('#region') as HTMLSelectElement
    for (const r of regions) {
      const opt = document.createElement('option')
      opt.value = r.region_id
      opt.textContent = `${r.region_id} (${r.training_window[0]} .. ${r.training_window[1]})`
      select.appendChild(opt)
    }
    if (regions.length > 0) {
      this.state.region = regions[0].region_id
      select.value = this.state.region
      void this.runSweep()
    }
  }

  private buildLayout(): void {
    this.root.innerHTML = `
      <header><h1>NPI scenario explorer</h1></header>
      <section class="controls">
        <label>Region <select id="region"></select></label>
        <label>Horizon <input id="horizon" type="number" min="7" max="120" value="30"></label>
        <label>Seed <input id="seed" type="number" min="0" value="0"></label>
        <label><input id="grid-mode" type="checkbox" checked> sweep eps grid</label>
        <label>eps <input id="eps" type="range" min="0" max="1" step="0.0001" value="0" disabled>
          <span id="eps-value">grid</span></label>
        <label><input id="log-j0" type="checkbox"> log J0 axis</label>
        <div class="weights" id="weights"></div>
      </section>
      <section class="panels">
        <div><h2>Bi-objective space</h2><div id="scatter"></div></div>
        <div><h2>Selected schedule</h2><div id="schedule"></div>
             <h2>Forecast</h2><div id="forecast"></div></div>
      </section>
      <footer id="status"></footer>
    `
    this.scatterEl = this.root.querySelector('#scatter') as HTMLElement
    this.scheduleEl = this.root.querySelector('#schedule') as HTMLElement
    this.forecastEl = this.root.querySelector('#forecast') as HTMLElement
    this.statusEl = this.root.querySelector('#status') as HTMLElement

    const weightsBox = this.root.querySelector('#weights') as HTMLElement
    NPI_CODES.forEach((code, j) => {
      const label = document.createElement('label')
      label.textContent = code
      const slider = document.createElement('input')
      slider.type = 'range'
      slider.min = '0'
      slider.max = '3'
      slider.step = '0.1'
      slider.value = '1'
      slider.dataset.index = String(j)
      slider.addEventListener('input', () => {
        this.state.weights[j] = Number(slider.value)
        void this.runSweep()
      })
      label.appendChild(slider)
      weightsBox.appendChild(label)
    })

    const select = this.root.querySelector('#region') as HTMLSelectElement
    select.addEventListener('change', () => {
      this.state.region = select.value
      void this.runSweep()
    })
    const horizon = this.root.querySelector('#horizon') as HTMLInputElement
    horizon.addEventListener('change', () => {
      this.state.horizon = Number(horizon.value)
      void this.runSweep()
    })
    const seed = this.root.querySelector('#seed') as HTMLInputElement
    seed.addEventListener('change', () => {
      this.state.seed = Number(seed.value)
      void this.runSweep()
    })
    const gridMode = this.root.querySelector('#grid-mode') as HTMLInputElement
    const eps = this.root.querySelector('#eps') as HTMLInputElement
    const epsValue = this.root.querySelector('#eps-value') as HTMLElement
    gridMode.addEventListener('change', () => {
      eps.disabled = gridMode.checked
      this.state.eps = gridMode.checked ? null : Number(eps.value)
      epsValue.textContent = gridMode.checked ? 'grid' : eps.value
      void this.runSweep()
    })
    eps.addEventListener('input', () => {
      this.state.eps = Number(eps.value)
      epsValue.textContent = eps.value
      void this.runSweep()
    })
    const logJ0 = this.root.querySelector('#log-j0') as HTMLInputElement
    logJ0.addEventListener('change', () => {
      this.state.logJ0 = logJ0.checked
      this.renderScatter()
    })
  }

  async runSweep(): Promise<void> {
    if (this.state.region === null) return
    this.statusEl.textContent = 'sweeping...'
    try {
      const result = await this.client.prescribeDebounced(toPrescribeRequest(this.state))
      if (result === null) return // superseded by a newer request
      this.state.lastSweep = result
      this.state.selectedPointId = result.chosen_id
      this.statusEl.textContent = `${result.points.length} points`
      this.renderScatter()
      if (result.chosen_id) {
        await this.selectPoint(result.points.find((p) => p.id === result.chosen_id)!)
      }
    } catch (err) {
      this.statusEl.textContent = `service error: ${String(err)}`
    }
  }

  renderScatter(): void {
    renderPareto(this.scatterEl, this.state.lastSweep?.points ?? [], {
      logJ0: this.state.logJ0,
      selectedId: this.state.selectedPointId,
      onSelect: (p) => void this.selectPoint(p),
    })
  }

  async selectPoint(point: SweepPoint): Promise<void> {
    this.state.selectedPointId = point.id
    this.renderScatter()
    try {
      const sched = await this.client.schedule(point.id)
      renderScheduleHeatmap(this.scheduleEl, sched)
      const fc = await this.client.forecast({
        region: this.state.region!,
        scenario: { kind: 'explicit', schedule: sched.schedule },
        days: sched.schedule.length,
      })
      renderForecast(this.forecastEl, fc)
    } catch (err) {
      this.statusEl.textContent = `service error: ${String(err)}`
    }
  }
}
