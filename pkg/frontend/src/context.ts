/** Context block the rewriter injects as the first child of head. */

export interface ShimContext {
  seed: number;
  timestamp14: string;
  replayBase: string;
}

export const CONTEXT_BLOCK_ID = "__replay_context__";

export function readShimContext(doc: Document): ShimContext | null {
  const block = doc.getElementById(CONTEXT_BLOCK_ID);
  if (!block || !block.textContent) {
    return null;
  }
  let data: { timestamp14?: string; wombat_sec?: string; replay_base?: string };
  try {
    data = JSON.parse(block.textContent);
  } catch {
    return null;
  }
  if (!data.timestamp14 || !data.wombat_sec || !data.replay_base) {
    return null;
  }
  const seed = parseInt(data.wombat_sec, 10);
  if (!Number.isFinite(seed) || seed < 0) {
    return null;
  }
  return { seed, timestamp14: data.timestamp14, replayBase: data.replay_base };
}
