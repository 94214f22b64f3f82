package ui;

public interface Listener {
    void onClick(Widget w);
}
