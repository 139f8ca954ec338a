use crate::extract::SlideDocument;
use crate::geometry::BBox;

/// What reading order needs to know about a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrderItem {
    pub id: u32,
    pub bbox: BBox,
    pub is_title: bool,
}

pub fn is_title_class(class: &str) -> bool {
    matches!(class, "title" | "heading")
}

/// Title regions first (top to bottom); the rest grouped into row bands,
/// bands top to bottom, left to right inside a band. Two regions share a
/// band when their row ranges overlap by at least half the shorter height
/// (and transitively). Inside a band, ties on `x` go to the region starting
/// higher, then to the larger one, so a container precedes what it holds;
/// remaining ties go to the lower id.
pub fn reading_order(items: &[OrderItem]) -> Vec<u32> {
    let mut titles: Vec<&OrderItem> = items.iter().filter(|r| r.is_title).collect();
    titles.sort_by_key(|r| (r.bbox.y, r.bbox.x, r.id));
    let rest: Vec<&OrderItem> = items.iter().filter(|r| !r.is_title).collect();

    let n = rest.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (rest[i].bbox, rest[j].bbox);
            let shorter = a.h.min(b.h) as u64;
            if 2 * a.vertical_overlap(&b) as u64 >= shorter {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut bands: Vec<Vec<&OrderItem>> = Vec::new();
    let mut band_of_root = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if band_of_root[root] == usize::MAX {
            band_of_root[root] = bands.len();
            bands.push(Vec::new());
        }
        bands[band_of_root[root]].push(rest[i]);
    }
    for band in &mut bands {
        band.sort_by_key(|r| (r.bbox.x, r.bbox.y, std::cmp::Reverse(r.bbox.area()), r.id));
    }
    bands.sort_by_key(|b| {
        let top = b.iter().map(|r| r.bbox.y).min().unwrap_or(0);
        let id = b.iter().map(|r| r.id).min().unwrap_or(0);
        (top, id)
    });
    titles
        .into_iter()
        .map(|r| r.id)
        .chain(bands.into_iter().flatten().map(|r| r.id))
        .collect()
}

pub fn document_order(doc: &SlideDocument) -> Vec<u32> {
    let items: Vec<OrderItem> = doc
        .regions
        .iter()
        .map(|r| OrderItem {
            id: r.id,
            bbox: r.bbox,
            is_title: is_title_class(&r.class),
        })
        .collect();
    reading_order(&items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: u32, x: u32, y: u32, w: u32, h: u32, is_title: bool) -> OrderItem {
        OrderItem {
            id,
            bbox: BBox::new(x, y, w, h),
            is_title,
        }
    }

    #[test]
    fn single_and_columns() {
        assert_eq!(reading_order(&[item(7, 0, 0, 1, 1, false)]), vec![7]);
        let regions = [
            item(0, 60, 30, 30, 50, false),
            item(1, 5, 30, 40, 50, false),
            item(2, 5, 2, 80, 10, true),
        ];
        assert_eq!(reading_order(&regions), vec![2, 1, 0]);
    }

    #[test]
    fn identical_boxes_by_id_and_container_first() {
        let a = [item(3, 10, 10, 5, 5, false), item(1, 10, 10, 5, 5, false)];
        assert_eq!(reading_order(&a), vec![1, 3]);
        let nested = [item(0, 10, 40, 10, 4, false), item(1, 10, 10, 40, 40, false)];
        assert_eq!(reading_order(&nested), vec![1, 0]);
    }

    #[test]
    fn bands_and_half_overlap_rule() {
        // b overlaps a by 5 of its 10 rows: same band, so left-to-right
        let r = [item(0, 50, 0, 10, 10, false), item(1, 0, 5, 10, 10, false)];
        assert_eq!(reading_order(&r), vec![1, 0]);
        // 4 of 10 rows: separate bands, top first
        let r = [item(0, 50, 0, 10, 10, false), item(1, 0, 6, 10, 10, false)];
        assert_eq!(reading_order(&r), vec![0, 1]);
    }
}
