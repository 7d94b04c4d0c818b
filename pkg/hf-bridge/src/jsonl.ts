import fs from 'node:fs';
import path from 'node:path';

/** Parse a JSONL file into objects, reporting the offending line on failure. */
export function readJsonl(filePath: string): Record<string, unknown>[] {
  const rows: Record<string, unknown>[] = [];
  const content = fs.readFileSync(filePath, 'utf-8');
  const lines = content.split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      throw new Error(`${filePath}:${i + 1}: invalid JSON (${(err as Error).message})`);
    }
    if (typeof parsed !== 'object' || parsed === null || Array.isArray(parsed)) {
      throw new Error(`${filePath}:${i + 1}: row is not an object`);
    }
    rows.push(parsed as Record<string, unknown>);
  }
  return rows;
}

export function writeJsonl(filePath: string, rows: Record<string, unknown>[]): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const body = rows.map((row) => JSON.stringify(row)).join('\n');
  fs.writeFileSync(filePath, rows.length ? body + '\n' : '', 'utf-8');
}

/** Read a tab-separated file with a header row into records. */
export function readTsv(filePath: string): Record<string, string>[] {
  const lines = fs.readFileSync(filePath, 'utf-8').split('\n');
  if (!lines.length || !lines[0].trim()) {
    throw new Error(`${filePath}: missing header row`);
  }
  const header = lines[0].split('\t');
  const rows: Record<string, string>[] = [];
  for (let i = 1; i < lines.length; i++) {
    if (!lines[i].trim()) continue;
    const parts = lines[i].split('\t');
    if (parts.length !== header.length) {
      throw new Error(`${filePath}:${i + 1}: expected ${header.length} tab-separated fields`);
    }
    const row: Record<string, string> = {};
    header.forEach((name, col) => {
      row[name] = parts[col];
    });
    rows.push(row);
  }
  return rows;
}

export function writeTsv(filePath: string, header: string[], rows: string[][]): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const lines = [header.join('\t'), ...rows.map((r) => r.join('\t'))];
  fs.writeFileSync(filePath, lines.join('\n') + '\n', 'utf-8');
}
