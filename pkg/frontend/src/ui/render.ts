// Tiny DOM helpers; no framework, no templating.

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function clear(node: HTMLElement): HTMLElement {
  node.replaceChildren();
  return node;
}

export function row(cells: (Node | string)[]): HTMLTableRowElement {
  return el(
    "tr",
    {},
    cells.map((cell) => el("td", {}, [cell])),
  );
}

export function table(headers: string[], rows: HTMLTableRowElement[]): HTMLTableElement {
  const head = el("tr", {}, headers.map((h) => el("th", {}, [h])));
  return el("table", {}, [el("thead", {}, [head]), el("tbody", {}, rows)]);
}

export function banner(kind: "ok" | "error" | "pending", text: string): HTMLElement {
  return el("div", { class: `banner ${kind}` }, [text]);
}

export function shortHash(hash: string, width = 12): string {
  return hash.length > width ? `${hash.slice(0, width)}…` : hash;
}
