/**
 * Replay shim entry point. Injected as the second element of head,
 * right after the context block, so it runs before any archived script.
 */

import { readShimContext, ShimContext } from "./context";
import { goldenVectorLines, SeededStream } from "./lcg";
import { fixBlankIframes } from "./iframes";
import { installCryptoOverride, installSeededRandom } from "./overrides";

interface ShimApi {
  installed: boolean;
  context: ShimContext | null;
  exportGoldenVectors(seed: number, n: number): string[];
}

(function install() {
  const win = window as any;
  const config = win.__adReplayShimConfig || {};
  const ctx = readShimContext(win.document);

  const api: ShimApi = {
    installed: false,
    context: ctx,
    exportGoldenVectors: goldenVectorLines,
  };

  if (ctx) {
    const stream = new SeededStream(ctx.seed);
    installSeededRandom(win, stream);
    installCryptoOverride(win, stream);
    if (!config.disableIframeFix) {
      fixBlankIframes(win, ctx);
    }
    api.installed = true;
  }

  win.__adReplayShim = api;
})();
