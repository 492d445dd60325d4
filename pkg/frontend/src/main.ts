import { ServiceClient } from './api.js'
import { ExplorerApp } from './app.js'

const SERVICE_URL = 'http://127.0.0.1:8000'

const root = document.getElementById('app')
if (root) {
  const app = new ExplorerApp(root, new ServiceClient(SERVICE_URL))
  void app.start()
}
