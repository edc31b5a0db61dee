/**
 * Repair about:blank ad iframes so their resources load through the
 * archive instead of leaking to the live web.
 *
 * Service-worker replay cannot see inside an about:blank iframe on some
 * engines, so any markup an ad script writes there requests live URLs.
 * The fix: capture document.write on such iframes, rewrite the written
 * markup's URLs into memento URLs, and hand the result back as a blob
 * URL in the iframe's src. Blob documents inherit the page origin, so
 * their subresource requests land on the replay service.
 */

import { ShimContext } from "./context";

type AnyWindow = Window & typeof globalThis & Record<string, any>;

const URL_ATTR = /(src|href|poster|action|data)(\s*=\s*)("([^"]*)"|'([^']*)')/gi;

const SKIP_PREFIXES = ["data:", "blob:", "javascript:", "mailto:", "about:", "#"];

function modifierFor(markupBefore: string): string {
  const tag = /<\s*([a-zA-Z][a-zA-Z0-9-]*)[^<]*$/.exec(markupBefore);
  switch (tag ? tag[1].toLowerCase() : "") {
    case "script":
      return "js_";
    case "img":
      return "im_";
    case "iframe":
      return "if_";
    case "link":
      return "cs_";
    default:
      return "";
  }
}

/** Rewrite absolute URLs in dynamically written markup to memento URLs. */
export function rewriteMarkup(markup: string, ctx: ShimContext): string {
  return markup.replace(URL_ATTR, (whole, name, eq, _quoted, dq, sq, offset) => {
    const value: string = dq !== undefined ? dq : sq;
    const quote = dq !== undefined ? '"' : "'";
    const trimmed = value.trim();
    if (!trimmed || SKIP_PREFIXES.some((p) => trimmed.startsWith(p))
        || trimmed.startsWith(ctx.replayBase)) {
      return whole;
    }
    let absolute = trimmed;
    if (absolute.startsWith("//")) {
      absolute = "https:" + absolute;
    }
    if (!/^https?:\/\//i.test(absolute)) {
      return whole; // relative writes resolve against the page, leave them
    }
    const mod = modifierFor(markup.slice(0, offset));
    return `${name}${eq}${quote}${ctx.replayBase}${ctx.timestamp14}${mod}/${absolute}${quote}`;
  });
}

function isBlankIframe(iframe: HTMLIFrameElement): boolean {
  const src = iframe.getAttribute("src");
  return !src || src === "about:blank";
}

function hookIframe(win: AnyWindow, iframe: HTMLIFrameElement, ctx: ShimContext): void {
  let inner: Document | null;
  try {
    inner = iframe.contentDocument;
  } catch {
    return; // cross-origin, nothing to do
  }
  if (!inner || !win.URL || typeof win.URL.createObjectURL !== "function" || !win.Blob) {
    return;
  }
  let buffer = "";
  let blobUrl: string | null = null;

  const materialize = () => {
    const rewritten = rewriteMarkup(buffer, ctx);
    if (blobUrl && typeof win.URL.revokeObjectURL === "function") {
      win.URL.revokeObjectURL(blobUrl);
    }
    blobUrl = win.URL.createObjectURL(new win.Blob([rewritten], { type: "text/html" }));
    iframe.src = blobUrl as string;
  };

  const write = (...texts: string[]) => {
    buffer += texts.join("");
    materialize();
  };
  try {
    (inner as any).write = write;
    (inner as any).writeln = (...texts: string[]) => write(...texts, "\n");
    (inner as any).close = () => undefined;
  } catch {
    // document not writable on this engine; leave the iframe blank
  }
}

export function fixBlankIframes(win: AnyWindow, ctx: ShimContext): void {
  const seen: WeakSet<Element> = new WeakSet();

  const process = (root: ParentNode) => {
    const frames: HTMLIFrameElement[] = [];
    if ((root as Element).tagName === "IFRAME") {
      frames.push(root as HTMLIFrameElement);
    }
    if (typeof (root as Element).querySelectorAll === "function") {
      frames.push(...Array.from(root.querySelectorAll("iframe")));
    }
    for (const frame of frames) {
      if (!seen.has(frame) && isBlankIframe(frame)) {
        seen.add(frame);
        hookIframe(win, frame, ctx);
      }
    }
  };

  process(win.document);
  const observer = new win.MutationObserver((mutations: MutationRecord[]) => {
    for (const mutation of mutations) {
      mutation.addedNodes.forEach((node) => {
        if (node.nodeType === 1) {
          process(node as Element);
        }
      });
    }
  });
  observer.observe(win.document.documentElement || win.document, {
    childList: true,
    subtree: true,
  });
}
