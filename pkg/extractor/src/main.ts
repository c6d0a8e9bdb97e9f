import * as process from 'node:process'

import { run } from './cli.js'

process.exit(run(process.argv.slice(2)))
