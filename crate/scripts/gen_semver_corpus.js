// Regenerates crates/core/tests/data/semver_corpus.json from the semver
// package bundled with npm. Usage: node scripts/gen_semver_corpus.js
'use strict'
const path = require('path')
const fs = require('fs')
const semver = require(process.env.SEMVER_PATH || '/usr/lib/node_modules/npm/node_modules/semver')

// xorshift32, fixed seed so the corpus is reproducible
let state = 0x2545f491
const next = () => {
  state ^= state << 13; state >>>= 0
  state ^= state >>> 17
  state ^= state << 5; state >>>= 0
  return state
}
const pick = (xs) => xs[next() % xs.length]
const num = () => pick([0, 0, 1, 1, 2, 3, 5, 10])

const pre = () => pick(['alpha', 'beta', 'rc', '0', '1', 'alpha.1', 'beta.2', 'rc.1', 'x.7.z'])
const genVersion = () => {
  let v = `${num()}.${num()}.${num()}`
  if (next() % 4 === 0) v += '-' + pre()
  if (next() % 12 === 0) v += '+build.' + num()
  return v
}
const partial = () => {
  const k = next() % 6
  if (k === 0) return `${num()}`
  if (k === 1) return `${num()}.${num()}`
  if (k === 2) return `${num()}.x`
  if (k === 3) return `${num()}.${num()}.x`
  if (k === 4) return `${num()}.${num()}.${num()}-${pre()}`
  return `${num()}.${num()}.${num()}`
}
const simple = () => {
  const k = next() % 9
  if (k === 0) return '^' + partial()
  if (k === 1) return '~' + partial()
  if (k === 2) return '>=' + partial()
  if (k === 3) return '<' + partial()
  if (k === 4) return '>' + partial()
  if (k === 5) return '<=' + partial()
  if (k === 6) return '=' + partial()
  if (k === 7) return pick(['*', 'x', '', '~>' + partial()])
  return partial()
}
const genRange = () => {
  const alts = 1 + (next() % 3 === 0 ? 1 : 0)
  const out = []
  for (let i = 0; i < alts; i++) {
    if (next() % 7 === 0) {
      out.push(`${partial()} - ${partial()}`)
    } else {
      const n = 1 + (next() % 3 === 0 ? 1 : 0)
      const parts = []
      for (let j = 0; j < n; j++) parts.push(simple())
      out.push(parts.join(' '))
    }
  }
  return out.join(' || ').trim() || '*'
}

const satisfies = []
const seen = new Set()
while (satisfies.length < 700) {
  const v = genVersion()
  const r = genRange()
  const key = v + '|' + r
  if (seen.has(key)) continue
  if (!semver.valid(v) || semver.validRange(r) === null) continue
  seen.add(key)
  satisfies.push({ version: v, range: r, normalized: new semver.Range(r).range, expected: semver.satisfies(v, r) })
}

// prerelease-focused pairs: range comparators name a prerelease of the same core
let prCount = 0
while (prCount < 160) {
  const core = `${num()}.${num()}.${num()}`
  const v = `${core}-${pre()}`
  const op = pick(['^', '~', '>=', '>', '<', '<=', ''])
  const bump = next() % 3 === 0 ? `${num()}.${num()}.${num()}` : core
  let r = `${op}${bump}-${pre()}`
  if (next() % 3 === 0) r += ' || ' + simple()
  const key = v + '|' + r
  if (seen.has(key)) continue
  if (!semver.valid(v) || semver.validRange(r) === null) continue
  seen.add(key)
  satisfies.push({ version: v, range: r, normalized: new semver.Range(r).range, expected: semver.satisfies(v, r) })
  prCount++
}

const maxSatisfying = []
while (maxSatisfying.length < 120) {
  const vs = []
  const n = 1 + next() % 6
  for (let i = 0; i < n; i++) vs.push(genVersion())
  const r = genRange()
  if (semver.validRange(r) === null) continue
  maxSatisfying.push({ versions: vs, range: r, expected: semver.maxSatisfying(vs, r) })
}

const doc = {
  generator: 'scripts/gen_semver_corpus.js',
  semver_version: require(path.join(process.env.SEMVER_PATH || '/usr/lib/node_modules/npm/node_modules/semver', 'package.json')).version,
  satisfies,
  max_satisfying: maxSatisfying,
}
const out = path.join(__dirname, '..', 'crates', 'core', 'tests', 'data', 'semver_corpus.json')
fs.writeFileSync(out, JSON.stringify(doc, null, 1) + '\n')
const pos = satisfies.filter(x => x.expected).length
console.log(`wrote ${satisfies.length} satisfies pairs (${pos} true), ${maxSatisfying.length} max_satisfying cases`)
