// Placeholder client shim. Build the real one (frontend/dist/shim.js) and
// point the server at it with --shim-asset to get deterministic in-page
// randomness and about:blank iframe repair during replay.
(function () {
  if (window.console && console.debug) {
    console.debug("adreplay: shim stub active (no overrides installed)");
  }
})();
